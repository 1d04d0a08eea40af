use clav_bench::{corpus, tokens, topic_documents};

#[test]
fn generators_are_seeded_and_shaped() {
    let c = corpus(3, 7, 5, 50, 1);
    assert_eq!(c.documents().len(), 3);
    assert_eq!(c.paragraphs().len(), 21);
    assert!(c.paragraphs().iter().all(|p| p.text.split(' ').count() == 5));
    assert_eq!(c, corpus(3, 7, 5, 50, 1));
    assert_ne!(c, corpus(3, 7, 5, 50, 2));

    let docs = topic_documents(9, 4, 3, 5);
    assert_eq!(docs.len(), 9);
    assert!(docs.iter().enumerate().all(|(d, doc)| doc.tokens.iter().all(|t| t.starts_with(&format!("t{}w", d % 3)))));

    assert_eq!(tokens(10, 4, 8), tokens(10, 4, 8));
}
