//! Reading log files and turning them into stores.
//!
//! Lines are read in batches; each batch is split into chunks that are
//! parsed, anonymized, classified and accumulated in parallel, and the chunk
//! trees are merged. Because merging is exact, the result does not depend on
//! how the work was split. Drill-down maps are compacted once, at the end.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use webentry_core::classifier::{CountingPolicy, Registry};
use webentry_core::{anonymize, classify_record, parse_line, AccessType, EntityTree, MalformedLine};

use crate::config::{hex, AnalysisConfig};
use crate::error::{Error, Result};
use crate::store::{InputFile, Store, Summary};

const BATCH_LINES: usize = 1 << 16;
const CHUNK_LINES: usize = 4096;
/// Malformed lines kept per input for diagnostics (never stored).
pub const MALFORMED_SAMPLES: usize = 5;

/// Everything learned from one input.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub tree: EntityTree,
    pub summary: Summary,
    pub input: InputFile,
    pub malformed_samples: Vec<MalformedLine>,
}

pub struct Analyzer {
    config: AnalysisConfig,
    fingerprint: String,
    policy: CountingPolicy,
    registry: Registry,
}

struct Partial {
    tree: EntityTree,
    summary: Summary,
    samples: Vec<MalformedLine>,
}

impl Partial {
    fn new(fingerprint: &str) -> Self {
        Self { tree: EntityTree::new(fingerprint), summary: Summary::default(), samples: Vec::new() }
    }

    fn merge(mut self, other: Partial) -> Partial {
        self.tree = self.tree.merge(other.tree).expect("same fingerprint");
        self.summary.add(&other.summary);
        self.samples.extend(other.samples);
        self.samples.sort_by_key(|m| m.line_number);
        self.samples.truncate(MALFORMED_SAMPLES);
        self
    }
}

impl Analyzer {
    pub fn new(config: AnalysisConfig) -> Result<Self> {
        config.validate().map_err(Error::Usage)?;
        let registry = config.registry().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(Self { fingerprint: config.fingerprint(), policy: config.counting_policy(), registry, config })
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    fn process(&self, lines: &[String], first_line: u64) -> Partial {
        let mut p = Partial::new(&self.fingerprint);
        for (i, raw) in lines.iter().enumerate() {
            let line_number = first_line + i as u64;
            p.summary.lines += 1;
            match parse_line(raw, line_number) {
                Ok(rec) => {
                    let rec = anonymize(rec, self.config.anonymization);
                    let entry = classify_record(rec, &self.policy, &self.registry);
                    match entry.access {
                        AccessType::Internal => p.summary.internal += 1,
                        AccessType::Excluded(_) => p.summary.excluded += 1,
                        _ => p.summary.counted += 1,
                    }
                    p.tree.accumulate(&entry);
                }
                Err(m) => {
                    p.summary.malformed += 1;
                    *p.summary.malformed_by_reason.entry(m.reason).or_default() += 1;
                    if p.samples.len() < MALFORMED_SAMPLES {
                        p.samples.push(m);
                    }
                }
            }
        }
        p
    }

    fn process_batch(&self, lines: &[String], first_line: u64) -> Partial {
        lines
            .par_chunks(CHUNK_LINES)
            .enumerate()
            .map(|(i, chunk)| self.process(chunk, first_line + (i * CHUNK_LINES) as u64))
            .reduce(|| Partial::new(&self.fingerprint), Partial::merge)
    }

    /// Analyzes one stream of log text. `name` is recorded as provenance.
    pub fn ingest_reader<R: Read>(&self, name: &str, reader: R) -> Result<Ingested> {
        let mut hashing = HashingReader::new(reader);
        let partial = {
            let mut buffered = BufReader::with_capacity(1 << 16, &mut hashing);
            let gzip = buffered.fill_buf().map_err(|e| Error::io(name, e))?.starts_with(&[0x1f, 0x8b]);
            let result = if gzip {
                self.ingest_lines(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(&mut buffered)))
            } else {
                self.ingest_lines(&mut buffered)
            };
            let partial = result.map_err(|e| Error::io(name, e))?;
            io::copy(&mut buffered, &mut io::sink()).map_err(|e| Error::io(name, e))?;
            partial
        };
        let mut tree = partial.tree;
        tree.compact(self.config.top_k);
        let input = InputFile {
            name: name.to_string(),
            sha256: hashing.finish(),
            lines: partial.summary.lines,
            malformed: partial.summary.malformed,
        };
        Ok(Ingested { tree, summary: partial.summary, input, malformed_samples: partial.samples })
    }

    fn ingest_lines<B: BufRead>(&self, mut reader: B) -> io::Result<Partial> {
        let mut total = Partial::new(&self.fingerprint);
        let mut batch: Vec<String> = Vec::with_capacity(BATCH_LINES);
        let mut buf = Vec::new();
        let mut next_line = 1u64;
        loop {
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf)?;
            if n > 0 {
                if buf.last() == Some(&b'\n') {
                    buf.pop();
                }
                if buf.last() == Some(&b'\r') {
                    buf.pop();
                }
                batch.push(String::from_utf8_lossy(&buf).into_owned());
            }
            if batch.len() == BATCH_LINES || (n == 0 && !batch.is_empty()) {
                let part = self.process_batch(&batch, next_line);
                next_line += batch.len() as u64;
                batch.clear();
                total = total.merge(part);
            }
            if n == 0 {
                return Ok(total);
            }
        }
    }

    /// Analyzes a file; `-` reads standard input.
    pub fn ingest_path(&self, path: &Path) -> Result<Ingested> {
        if path.as_os_str() == "-" {
            return self.ingest_reader("-", io::stdin().lock());
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.ingest_reader(&name, file).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// Builds a store from already ingested inputs, in order.
    pub fn store_from(&self, parts: Vec<Ingested>) -> Store {
        let mut store = Store::new(self.config.clone());
        for part in parts {
            store.tree = std::mem::take(&mut store.tree).merge(part.tree).expect("same fingerprint");
            store.summary.add(&part.summary);
            store.inputs.push(part.input);
        }
        store.tree.compact(self.config.top_k);
        store
    }

    /// Analyzes in-memory text, mostly for tests.
    pub fn analyze_text(&self, name: &str, text: &str) -> Store {
        let part = self.ingest_reader(name, text.as_bytes()).expect("in-memory read");
        self.store_from(vec![part])
    }
}

struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R> HashingReader<R> {
    fn new(inner: R) -> Self {
        Self { inner, hasher: Sha256::new() }
    }

    fn finish(self) -> String {
        hex(&self.hasher.finalize())
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}
