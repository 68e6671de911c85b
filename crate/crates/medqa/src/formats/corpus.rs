use std::collections::HashSet;

use medqa_core::corpus::{content_id, Corpus, Provenance, QAPair};
use serde::{Deserialize, Serialize};

use super::FormatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[serde(alias = "jsonlines")]
    Jsonl,
    Csv,
}

/// Strict parsing fails on the first malformed record; lenient parsing
/// drops it and counts it as incomplete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    q: Option<String>,
    a: Option<String>,
    #[serde(rename = "type")]
    qtype: Option<String>,
}

struct Builder {
    mode: ParseMode,
    pairs: Vec<QAPair>,
    ids: HashSet<String>,
    dropped_incomplete: usize,
    dropped_duplicate: usize,
}

impl Builder {
    fn malformed(&mut self, line: usize) -> Result<(), FormatError> {
        match self.mode {
            ParseMode::Strict => Err(FormatError::MalformedRecord(line)),
            ParseMode::Lenient => {
                self.dropped_incomplete += 1;
                Ok(())
            }
        }
    }

    fn push(&mut self, line: usize, rec: RawRecord) -> Result<(), FormatError> {
        let (Some(q), Some(a)) = (rec.q, rec.a) else {
            return self.malformed(line);
        };
        let id = match rec.id.filter(|s| !s.is_empty()) {
            Some(id) => {
                if self.ids.contains(&id) {
                    return match self.mode {
                        ParseMode::Strict => Err(FormatError::DuplicateId { line, id }),
                        ParseMode::Lenient => {
                            self.dropped_duplicate += 1;
                            Ok(())
                        }
                    };
                }
                id
            }
            None => {
                // identical content hashes identically; suffix keeps ids unique
                // and leaves the duplicate for cleaning to drop
                let base = content_id(&q, &a);
                let mut id = base.clone();
                let mut n = 2;
                while self.ids.contains(&id) {
                    id = format!("{base}-{n}");
                    n += 1;
                }
                id
            }
        };
        self.ids.insert(id.clone());
        let mut p = QAPair::new(id, q, a);
        p.qtype = rec.qtype.filter(|t| !t.trim().is_empty());
        self.pairs.push(p);
        Ok(())
    }
}

/// One `QAPair` per well-formed record, in input order. JSON lines use keys
/// `id` (optional), `q`, `a`, `type` (optional); CSV needs a header with
/// `q` and `a` columns and may add `type` and `id`. Blank JSON lines are
/// skipped. Records without an id get a content hash.
pub fn parse_corpus(input: &[u8], format: CorpusFormat, mode: ParseMode) -> Result<Corpus, FormatError> {
    let text = std::str::from_utf8(input).map_err(|e| FormatError::Utf8(e.valid_up_to()))?;
    let mut b = Builder { mode, pairs: Vec::new(), ids: HashSet::new(), dropped_incomplete: 0, dropped_duplicate: 0 };
    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<RawRecord>(line) {
                    Ok(rec) => b.push(i + 1, rec)?,
                    Err(_) => b.malformed(i + 1)?,
                }
            }
        }
        CorpusFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
            let headers = rdr.headers()?.clone();
            let col = |name: &str| headers.iter().position(|h| h.trim() == name);
            let (qc, ac, tc, ic) = (col("q"), col("a"), col("type"), col("id"));
            if qc.is_none() || ac.is_none() {
                return Err(FormatError::MalformedRecord(1));
            }
            for row in rdr.records() {
                let row = row?;
                let line = row.position().map_or(0, |p| p.line() as usize);
                let get = |c: Option<usize>| c.and_then(|c| row.get(c)).map(str::to_string);
                let rec = RawRecord { id: get(ic), q: get(qc), a: get(ac), qtype: get(tc) };
                b.push(line, rec)?;
            }
        }
    }
    Ok(Corpus::from_parts(b.pairs, b.dropped_incomplete, b.dropped_duplicate))
}

/// A prepared record: the raw fields plus provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRecord {
    pub id: String,
    pub q: String,
    pub a: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<String>,
    pub provenance: Provenance,
}

pub fn write_split(c: &Corpus) -> Result<String, FormatError> {
    let recs: Vec<SplitRecord> = c
        .pairs
        .iter()
        .map(|p| SplitRecord {
            id: p.id.clone(),
            q: p.question.clone(),
            a: p.answer.clone(),
            qtype: p.qtype.clone(),
            provenance: p.provenance,
        })
        .collect();
    super::to_jsonl(&recs)
}

pub fn read_split(text: &str) -> Result<Corpus, FormatError> {
    let recs: Vec<SplitRecord> = super::read_jsonl(text)?;
    let pairs = recs
        .into_iter()
        .map(|r| QAPair { id: r.id, question: r.q, answer: r.a, qtype: r.qtype, provenance: r.provenance })
        .collect();
    Ok(Corpus::from_pairs(pairs))
}
