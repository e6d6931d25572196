use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelId, SparseDocument};
use crate::error::{Error, Result};

/// Bijection between distinct labelsets and meta-class ids.
///
/// Meta-class ids are assigned in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<LabelId>>", into = "Vec<Vec<LabelId>>")]
pub struct PowersetMap {
    labelsets: Vec<Vec<LabelId>>,
    index: BTreeMap<Vec<LabelId>, u32>,
}

impl From<Vec<Vec<LabelId>>> for PowersetMap {
    fn from(labelsets: Vec<Vec<LabelId>>) -> Self {
        let index = labelsets
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Self { labelsets, index }
    }
}

impl From<PowersetMap> for Vec<Vec<LabelId>> {
    fn from(map: PowersetMap) -> Self {
        map.labelsets
    }
}

impl PowersetMap {
    pub fn len(&self) -> usize {
        self.labelsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labelsets.is_empty()
    }

    /// Returns the meta-class of a labelset, registering it if new.
    pub fn encode(&mut self, labels: &[LabelId]) -> u32 {
        let mut key = labels.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.labelsets.len() as u32;
        self.labelsets.push(key.clone());
        self.index.insert(key, id);
        id
    }

    pub fn lookup(&self, labels: &[LabelId]) -> Option<u32> {
        let mut key = labels.to_vec();
        key.sort_unstable();
        key.dedup();
        self.index.get(&key).copied()
    }

    pub fn decode(&self, meta_class: u32) -> Result<&[LabelId]> {
        self.labelsets
            .get(meta_class as usize)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownMetaClass(meta_class))
    }
}

/// Rewrites every document's labelset as a single meta-label.
pub fn encode_label_powerset(corpus: &Corpus) -> Result<(Corpus, PowersetMap)> {
    let mut map = PowersetMap::default();
    let mut documents = Vec::with_capacity(corpus.len());
    for doc in corpus.iter() {
        if doc.labels.is_empty() {
            return Err(Error::InvalidInput(format!(
                "label powerset needs labeled documents; document {} has none",
                doc.doc_id
            )));
        }
        let meta = map.encode(&doc.labels);
        documents.push(SparseDocument {
            doc_id: doc.doc_id,
            features: doc.features.clone(),
            labels: vec![meta],
        });
    }
    Ok((Corpus::new(format!("{}#powerset", corpus.source_name), documents), map))
}

pub fn decode_label_powerset(map: &PowersetMap, meta_class: u32) -> Result<Vec<LabelId>> {
    map.decode(meta_class).map(<[LabelId]>::to_vec)
}
