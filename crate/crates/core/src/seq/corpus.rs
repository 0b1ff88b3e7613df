//! Token corpora and their JSONL representation.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub tokens: Vec<u32>,
    /// One latent id per token; `0` is ⟨act⟩.
    pub latents: Option<Vec<u32>>,
    pub task_id: String,
}

impl Record {
    pub fn new(tokens: Vec<u32>) -> Self {
        Record { tokens, latents: None, task_id: String::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return invalid(format!("record {:?} has no tokens", self.task_id));
        }
        if let Some(l) = &self.latents {
            if l.len() != self.tokens.len() {
                return invalid(format!(
                    "record {:?}: {} latents for {} tokens",
                    self.task_id,
                    l.len(),
                    self.tokens.len()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub records: Vec<Record>,
}

impl Corpus {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        records.iter().try_for_each(Record::validate)?;
        Ok(Corpus { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.records.iter().map(|r| r.tokens.len()).sum()
    }

    pub fn max_token(&self) -> Option<u32> {
        self.records.iter().flat_map(|r| r.tokens.iter().copied()).max()
    }

    /// Contiguous slice of records.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Corpus {
        Corpus { records: self.records[range].to_vec() }
    }

    /// Splits into `n` contiguous shards whose sizes differ by at most one.
    pub fn shards(&self, n: usize) -> Result<Vec<Corpus>> {
        if n == 0 || n > self.records.len() {
            return invalid(format!("cannot split {} records into {n} shards", self.records.len()));
        }
        let base = self.records.len() / n;
        let extra = self.records.len() % n;
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        for i in 0..n {
            let len = base + usize::from(i < extra);
            out.push(self.slice(start..start + len));
            start += len;
        }
        Ok(out)
    }

    pub fn without_latents(&self) -> Corpus {
        Corpus {
            records: self
                .records
                .iter()
                .map(|r| Record { latents: None, ..r.clone() })
                .collect(),
        }
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: Record = serde_json::from_str(line)
                .map_err(|e| Error::Invalid(format!("corpus line {}: {e}", i + 1)))?;
            records.push(r);
        }
        Corpus::new(records)
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut text = String::new();
        for line in std::io::BufReader::new(file).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Corpus::from_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("serde_json emits UTF-8")
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Number of distinct order-`order` contexts over `n_tokens` tokens plus BOS.
pub fn n_contexts(order: usize, n_tokens: usize) -> usize {
    (n_tokens + 1).pow(order as u32)
}

/// Index of the context formed by the last `order` tokens of `history`,
/// left-padded with BOS.
pub fn context_index(history: &[u32], order: usize, n_tokens: usize) -> usize {
    let base = n_tokens + 1;
    let bos = n_tokens;
    (0..order).fold(0, |acc, back| {
        let sym = history
            .len()
            .checked_sub(order - back)
            .map_or(bos, |i| history[i] as usize);
        acc * base + sym
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_validation() {
        let c = Corpus::new(vec![
            Record { tokens: vec![1, 2], latents: Some(vec![1, 0]), task_id: "a".into() },
            Record { tokens: vec![3], latents: None, task_id: "b".into() },
        ])
        .unwrap();
        let text = c.to_jsonl();
        assert!(text.contains(r#""latents":null"#));
        assert_eq!(Corpus::from_jsonl(&text).unwrap(), c);
        assert!(Corpus::from_jsonl(r#"{"tokens":[1],"latents":null,"task_id":"x","extra":1}"#).is_err());
        assert!(Corpus::from_jsonl(r#"{"tokens":[1,2],"latents":[0],"task_id":"x"}"#).is_err());
    }

    #[test]
    fn contexts_pad_with_bos() {
        // 3 tokens, BOS = 3, base 4
        assert_eq!(context_index(&[], 2, 3), 3 * 4 + 3);
        assert_eq!(context_index(&[1], 2, 3), 3 * 4 + 1);
        assert_eq!(context_index(&[0, 2, 1], 2, 3), 2 * 4 + 1);
        assert_eq!(context_index(&[0, 2, 1], 0, 3), 0);
        assert_eq!(n_contexts(2, 3), 16);
    }

    #[test]
    fn shards_cover_all_records() {
        let c = Corpus::new((0..7).map(|i| Record::new(vec![i])).collect()).unwrap();
        let s = c.shards(3).unwrap();
        assert_eq!(s.iter().map(Corpus::len).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert!(c.shards(8).is_err());
    }
}
