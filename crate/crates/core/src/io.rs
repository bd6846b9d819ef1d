//! Line-oriented file formats: triples, vocabularies, embeddings and entity
//! categories, plus JSON helpers for models and generator truths.
//!
//! Triple files are tab-separated `head  relation  tail  [label  [sigma]]` with
//! `#` comments and blank lines ignored; `-` marks a missing label. Embedding
//! files start with a `D <dim>` header followed by `entity v_1 … v_D` lines.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EmbeddingTable, Triple};

/// Names with stable indices in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// `0, 1, …, n−1` as names.
    pub fn numbered(n: usize) -> Self {
        let mut v = Self::new();
        for i in 0..n {
            v.insert(&i.to_string());
        }
        v
    }

    pub fn insert(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> Option<&str> {
        self.names.get(i).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl FromIterator<String> for Vocabulary {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut v = Self::new();
        for name in iter {
            v.insert(&name);
        }
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripleSet {
    pub triples: Vec<Triple>,
    pub entities: Vocabulary,
    pub relations: Vocabulary,
}

impl TripleSet {
    /// Triple count per relation index.
    pub fn relation_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for x in &self.triples {
            *counts.entry(x.relation).or_insert(0) += 1;
        }
        counts
    }
}

/// Closed vocabularies to resolve ids against. When set, unknown ids are
/// rejected; otherwise they are added in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub entities: Option<Vocabulary>,
    pub relations: Option<Vocabulary>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn resolve(vocab: &mut Vocabulary, closed: bool, name: &str, kind: &str, path: &Path, line: usize) -> Result<usize> {
    if name.is_empty() {
        return Err(parse_err(path, line, format!("empty {kind} id")));
    }
    if closed {
        vocab
            .get(name)
            .ok_or_else(|| parse_err(path, line, format!("unknown {kind} id `{name}`")))
    } else {
        Ok(vocab.insert(name))
    }
}

fn parse_real(field: &str, what: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} `{field}`")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite {what}")));
    }
    Ok(v)
}

/// Parses triple-file text; `path` is only used in error messages.
pub fn parse_triples(text: &str, path: &Path, options: &LoadOptions) -> Result<TripleSet> {
    let mut entities = options.entities.clone().unwrap_or_default();
    let mut relations = options.relations.clone().unwrap_or_default();
    let (closed_e, closed_r) = (options.entities.is_some(), options.relations.is_some());
    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in content_lines(text) {
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if !(3..=5).contains(&fields.len()) {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 to 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let head = resolve(&mut entities, closed_e, fields[0], "entity", path, line)?;
        let relation = resolve(&mut relations, closed_r, fields[1], "relation", path, line)?;
        let tail = resolve(&mut entities, closed_e, fields[2], "entity", path, line)?;
        let mut x = Triple::new(head, relation, tail);
        if let Some(&f) = fields.get(3) {
            if f != "-" {
                x = x.with_label(parse_real(f, "label", path, line)?);
            }
        }
        if let Some(&f) = fields.get(4) {
            let s = parse_real(f, "sigma", path, line)?;
            if s < 0.0 {
                return Err(parse_err(path, line, "sigma must be nonnegative"));
            }
            x = x.with_noise_scale(s);
        }
        // Rows with a sigma column are independent regression draws and may repeat.
        let fingerprint = (x.key(), x.label.map(f64::to_bits));
        if x.noise_scale.is_none() && !seen.insert(fingerprint) {
            return Err(parse_err(path, line, "duplicate triple"));
        }
        triples.push(x);
    }
    Ok(TripleSet {
        triples,
        entities,
        relations,
    })
}

pub fn load_triples(path: impl AsRef<Path>, options: &LoadOptions) -> Result<TripleSet> {
    let path = path.as_ref();
    parse_triples(&fs::read_to_string(path)?, path, options)
}

fn lookup<'a>(vocab: &'a Vocabulary, i: usize, kind: &'static str) -> Result<&'a str> {
    vocab.name(i).ok_or(Error::IndexOutOfBounds {
        kind,
        index: i,
        len: vocab.len(),
    })
}

pub fn format_triples(triples: &[Triple], entities: &Vocabulary, relations: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for x in triples {
        let h = lookup(entities, x.head, "entity")?;
        let r = lookup(relations, x.relation, "relation")?;
        let t = lookup(entities, x.tail, "entity")?;
        write!(out, "{h}\t{r}\t{t}").unwrap();
        match (x.label, x.noise_scale) {
            (None, None) => {}
            (Some(y), None) => write!(out, "\t{y}").unwrap(),
            (y, Some(s)) => {
                let y = y.map_or_else(|| "-".to_owned(), |y| y.to_string());
                write!(out, "\t{y}\t{s}").unwrap();
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_triples(path: impl AsRef<Path>, set: &TripleSet) -> Result<()> {
    fs::write(path, format_triples(&set.triples, &set.entities, &set.relations)?)?;
    Ok(())
}

/// One name per line.
pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut v = Vocabulary::new();
    for (line, name) in content_lines(&text) {
        let name = name.trim();
        if v.get(name).is_some() {
            return Err(parse_err(path, line, format!("duplicate name `{name}`")));
        }
        v.insert(name);
    }
    Ok(v)
}

pub fn save_vocabulary(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
    let mut out = String::new();
    for n in vocab.names() {
        out.push_str(n);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// An embedding file resolved against an entity vocabulary. Rows for entities
/// absent from the file are zero and marked uncovered.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedEmbeddings {
    pub table: EmbeddingTable,
    pub covered: Vec<bool>,
}

impl LoadedEmbeddings {
    pub fn is_complete(&self) -> bool {
        self.covered.iter().all(|&c| c)
    }
}

pub fn parse_embeddings(
    text: &str,
    path: &Path,
    entities: &Vocabulary,
    require_full: bool,
) -> Result<LoadedEmbeddings> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing `D <dim>` header"))?;
    let dim: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["D", d] => d
            .parse()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| parse_err(path, hline, format!("invalid dimension `{d}`")))?,
        _ => return Err(parse_err(path, hline, "expected `D <dim>` header")),
    };
    let n = entities.len();
    let mut data = vec![0.0; n * dim];
    let mut covered = vec![false; n];
    for (line, raw) in lines {
        let mut fields = raw.split_whitespace();
        let name = fields.next().expect("content lines are nonblank");
        let i = entities
            .get(name)
            .ok_or_else(|| parse_err(path, line, format!("unknown entity id `{name}`")))?;
        if covered[i] {
            return Err(parse_err(path, line, format!("duplicate entity `{name}`")));
        }
        let values = fields
            .map(|f| parse_real(f, "embedding value", path, line))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(parse_err(
                path,
                line,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        data[i * dim..(i + 1) * dim].copy_from_slice(&values);
        covered[i] = true;
    }
    if require_full {
        if let Some(i) = covered.iter().position(|&c| !c) {
            return Err(Error::config(format!(
                "embedding file {} has no vector for entity `{}`",
                path.display(),
                entities.names()[i]
            )));
        }
    }
    Ok(LoadedEmbeddings {
        table: EmbeddingTable::from_vec(n, dim, data)?,
        covered,
    })
}

pub fn load_embeddings(path: impl AsRef<Path>, entities: &Vocabulary, require_full: bool) -> Result<LoadedEmbeddings> {
    let path = path.as_ref();
    parse_embeddings(&fs::read_to_string(path)?, path, entities, require_full)
}

pub fn format_embeddings(table: &EmbeddingTable, entities: &Vocabulary) -> Result<String> {
    if entities.len() != table.n_entities() {
        return Err(Error::shape("entity vocabulary", table.n_entities(), entities.len()));
    }
    let mut out = format!("D {}\n", table.dim());
    for (i, name) in entities.names().iter().enumerate() {
        out.push_str(name);
        for v in table.row(i) {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable, entities: &Vocabulary) -> Result<()> {
    fs::write(path, format_embeddings(table, entities)?)?;
    Ok(())
}

/// `entity<TAB>category` lines; returns one category index per entity, with
/// category indices in first-seen order.
pub fn load_categories(path: impl AsRef<Path>, entities: &Vocabulary) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut names = Vocabulary::new();
    let mut out = vec![None; entities.len()];
    for (line, raw) in content_lines(&text) {
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        let [entity, category] = fields[..] else {
            return Err(parse_err(path, line, "expected `entity<TAB>category`"));
        };
        let i = entities
            .get(entity)
            .ok_or_else(|| parse_err(path, line, format!("unknown entity id `{entity}`")))?;
        out[i] = Some(names.insert(category));
    }
    out.into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::config(format!("entity `{}` has no category", entities.names()[i]))))
        .collect()
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// `dir/name`, creating `dir` if needed.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t.tsv")
    }

    #[test]
    fn empty_file() {
        let s = parse_triples("", p(), &LoadOptions::default()).unwrap();
        assert!(s.triples.is_empty() && s.entities.is_empty() && s.relations.is_empty());
    }

    #[test]
    fn comment_is_skipped() {
        let s = parse_triples("# header\na\tr\tb\nb\tr\tc\t1.5\n", p(), &LoadOptions::default()).unwrap();
        assert_eq!(s.triples.len(), 2);
        assert_eq!(s.entities.names(), ["a", "b", "c"]);
        assert_eq!(s.triples[1], Triple::new(1, 0, 2).with_label(1.5));
        assert_eq!(s.relation_counts()[&0], 2);
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_triples("a\tr\tb\n\na\tr\n", p(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        assert!(parse_triples("a\tr\tb\tx\n", p(), &LoadOptions::default()).is_err());
    }

    #[test]
    fn unknown_ids_rejected_with_closed_vocab() {
        let opts = LoadOptions {
            entities: Some(["a".to_owned(), "b".to_owned()].into_iter().collect()),
            relations: None,
        };
        assert!(parse_triples("a\tr\tb\n", p(), &opts).is_ok());
        assert!(matches!(
            parse_triples("a\tr\tz\n", p(), &opts),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicates_rejected_unless_labels_differ() {
        assert!(parse_triples("a\tr\tb\t1\na\tr\tb\t2\n", p(), &LoadOptions::default()).is_ok());
        assert!(parse_triples("a\tr\tb\na\tr\tb\n", p(), &LoadOptions::default()).is_err());
        assert!(parse_triples("a\tr\tb\t1\na\tr\tb\t1\n", p(), &LoadOptions::default()).is_err());
        let draws = parse_triples("a\tr\tb\t1\t0\na\tr\tb\t1\t0\n", p(), &LoadOptions::default()).unwrap();
        assert_eq!(draws.triples.len(), 2);
    }

    #[test]
    fn embeddings_round_trip_and_coverage() {
        let vocab: Vocabulary = ["x", "y"].iter().map(|s| s.to_string()).collect();
        let table = EmbeddingTable::from_rows(&[vec![0.1, -2.5], vec![1e-300, 3.0]]).unwrap();
        let text = format_embeddings(&table, &vocab).unwrap();
        let back = parse_embeddings(&text, p(), &vocab, true).unwrap();
        assert_eq!(back.table, table);
        let partial = parse_embeddings("D 2\nx 1 2\n", p(), &vocab, false).unwrap();
        assert_eq!(partial.covered, [true, false]);
        assert!(parse_embeddings("D 2\nx 1 2\n", p(), &vocab, true).is_err());
        assert!(parse_embeddings("D 2\nx 1 2 3\n", p(), &vocab, false).is_err());
        assert!(parse_embeddings("x 1 2\n", p(), &vocab, false).is_err());
    }
}
