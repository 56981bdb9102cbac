use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::dual::MessageSet;

pub const MESSAGE_SEPARATOR: &str = "\n[MSG]\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedDocument {
    pub node: usize,
    pub text: String,
    /// Number of messages joined into `text`.
    pub parts: usize,
    pub origin_included: bool,
}

/// Join the node's own text (unless `include_origin` is false) and its
/// messages, sorted by sender, with [`MESSAGE_SEPARATOR`]. Empty messages are
/// skipped.
pub fn aggregate_text(
    node: usize,
    origin: &str,
    messages: &[(usize, &str)],
    include_origin: bool,
) -> Result<AggregatedDocument, EmbedError> {
    let mut sorted: Vec<(usize, &str)> = messages.iter().copied().filter(|(_, m)| !m.is_empty()).collect();
    sorted.sort();
    let mut pieces: Vec<&str> = Vec::with_capacity(sorted.len() + 1);
    if include_origin {
        pieces.push(origin);
    }
    pieces.extend(sorted.iter().map(|(_, m)| *m));
    if pieces.is_empty() {
        return Err(EmbedError::EmptyDocument(node));
    }
    Ok(AggregatedDocument {
        node,
        text: pieces.join(MESSAGE_SEPARATOR),
        parts: sorted.len(),
        origin_included: include_origin,
    })
}

/// One document per node. Without the origin text, nodes with no messages
/// yield `None`.
pub fn aggregate_all(texts: &[String], messages: &MessageSet, include_origin: bool) -> Vec<Option<AggregatedDocument>> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| aggregate_text(i, t, &messages.incoming(i), include_origin).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn joins_in_sender_order() {
        let d = aggregate_text(0, "a", &[(5, "m5"), (2, "m2")], true).unwrap();
        assert_eq!(d.text, "a\n[MSG]\nm2\n[MSG]\nm5");
        assert_eq!(d.parts, 2);
        assert!(d.origin_included);
    }

    #[test]
    fn origin_only_and_messages_only() {
        assert_eq!(aggregate_text(0, "a", &[], true).unwrap().text, "a");
        let d = aggregate_text(0, "a", &[(1, "m")], false).unwrap();
        assert_eq!(d.text, "m");
        assert!(!d.origin_included);
        assert!(matches!(aggregate_text(7, "a", &[], false), Err(EmbedError::EmptyDocument(7))));
    }

    #[test]
    fn aggregate_all_leaves_silent_nodes_out_without_origin() {
        let mut m = MessageSet::default();
        m.insert(0, 1, "hi".into());
        let texts = vec!["x".to_owned(), "y".to_owned()];
        let docs = aggregate_all(&texts, &m, false);
        assert_eq!(docs[0].as_ref().unwrap().text, "hi");
        assert!(docs[1].is_none());
        let docs = aggregate_all(&texts, &m, true);
        assert_eq!(docs[1].as_ref().unwrap().text, "y");
    }

    proptest! {
        #[test]
        fn order_canonical(msgs in proptest::collection::btree_map(0usize..50, "[a-z ]{1,8}", 0..8), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let list: Vec<(usize, String)> = msgs.into_iter().collect();
            let mut shuffled = list.clone();
            shuffled.shuffle(&mut crate::seed::rng(seed, &[]));
            let a: Vec<(usize, &str)> = list.iter().map(|(j, t)| (*j, t.as_str())).collect();
            let b: Vec<(usize, &str)> = shuffled.iter().map(|(j, t)| (*j, t.as_str())).collect();
            prop_assert_eq!(aggregate_text(0, "o", &a, true).unwrap(), aggregate_text(0, "o", &b, true).unwrap());
        }
    }
}
