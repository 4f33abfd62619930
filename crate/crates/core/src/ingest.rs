//! Document collection and topic file readers.
//!
//! Collections are streamed: [`DocumentStream`] holds at most one record in
//! memory at a time (plus the set of ids seen so far, for duplicate detection).
//! Malformed records are skipped and reported in [`IngestStats`]; a duplicate
//! id ends the stream with an error.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    #[serde(alias = "trec")]
    TrecSgml,
    Cacm,
    Jsonl,
    #[serde(alias = "plain")]
    PlainDir,
}

impl FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trec" | "trec_sgml" => Ok(SourceFormat::TrecSgml),
            "cacm" => Ok(SourceFormat::Cacm),
            "jsonl" => Ok(SourceFormat::Jsonl),
            "plain" | "plain_dir" => Ok(SourceFormat::PlainDir),
            other => Err(Error::Config(format!(
                "unknown collection format `{other}` (expected trec|cacm|jsonl|plain_dir)"
            ))),
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::TrecSgml => "trec_sgml",
            SourceFormat::Cacm => "cacm",
            SourceFormat::Jsonl => "jsonl",
            SourceFormat::PlainDir => "plain_dir",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub source_format: SourceFormat,
}

impl RawDocument {
    /// Title and body joined; this is what gets indexed and scored.
    pub fn text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else if self.body.is_empty() {
            self.title.clone()
        } else {
            format!("{}\n{}", self.title, self.body)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub path: PathBuf,
    pub offset: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub documents: usize,
    /// Number of invalid UTF-8 sequences replaced with U+FFFD.
    pub decode_replacements: usize,
    pub skipped: Vec<SkippedRecord>,
}

enum Parsed {
    Doc {
        id: String,
        title: String,
        body: String,
    },
    Malformed {
        offset: u64,
        reason: String,
    },
}

/// Line reader that tracks byte offsets and lossy-decodes UTF-8.
struct LineReader {
    inner: Box<dyn BufRead + Send>,
    offset: u64,
    buf: Vec<u8>,
}

impl LineReader {
    fn new(inner: Box<dyn BufRead + Send>) -> Self {
        LineReader {
            inner,
            offset: 0,
            buf: Vec::new(),
        }
    }

    /// Returns (start offset, line without the trailing newline).
    fn next_line(&mut self, replacements: &mut usize) -> std::io::Result<Option<(u64, String)>> {
        self.buf.clear();
        let n = self.inner.read_until(b'\n', &mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        let start = self.offset;
        self.offset += n as u64;
        while matches!(self.buf.last(), Some(b'\n' | b'\r')) {
            self.buf.pop();
        }
        Ok(Some((start, decode_lossy(&self.buf, replacements))))
    }
}

fn decode_lossy(bytes: &[u8], replacements: &mut usize) -> String {
    let mut out = String::with_capacity(bytes.len());
    for chunk in bytes.utf8_chunks() {
        out.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            *replacements += 1;
            out.push(char::REPLACEMENT_CHARACTER);
        }
    }
    out
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(GzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

trait RecordParser: Send {
    fn next_record(
        &mut self,
        lines: &mut LineReader,
        replacements: &mut usize,
    ) -> std::io::Result<Option<Parsed>>;
}

#[derive(Default)]
struct TrecParser {
    pending: Option<(u64, String)>,
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    let upper = needle.to_ascii_uppercase();
    let lower = needle.to_ascii_lowercase();
    match (haystack.find(&upper), haystack.find(&lower)) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Finds an opening `<DOC>` tag (also `<DOC attr=..>`), but not `<DOCNO>`.
fn find_doc_open(line: &str) -> Option<(usize, usize)> {
    let mut from = 0;
    while let Some(rel) = find_ci(&line[from..], "<doc") {
        let start = from + rel;
        let after = &line[start + 4..];
        match after.chars().next() {
            Some('>') => return Some((start, start + 5)),
            Some(c) if c.is_whitespace() => {
                let close = after.find('>')?;
                return Some((start, start + 4 + close + 1));
            }
            _ => from = start + 4,
        }
    }
    None
}

impl RecordParser for TrecParser {
    fn next_record(
        &mut self,
        lines: &mut LineReader,
        replacements: &mut usize,
    ) -> std::io::Result<Option<Parsed>> {
        let mut block: Option<(u64, String)> = None;
        loop {
            let (line_offset, line) = match self.pending.take() {
                Some(p) => p,
                None => match lines.next_line(replacements)? {
                    Some(l) => l,
                    None => {
                        return Ok(block.map(|(offset, _)| Parsed::Malformed {
                            offset,
                            reason: "unterminated <DOC> block".into(),
                        }));
                    }
                },
            };
            let mut rest = line.as_str();
            let mut rest_offset = line_offset;
            if block.is_none() {
                match find_doc_open(rest) {
                    Some((start, end)) => {
                        block = Some((line_offset + start as u64, String::new()));
                        rest_offset += end as u64;
                        rest = &rest[end..];
                    }
                    None => continue,
                }
            }
            let (offset, buf) = block.as_mut().expect("inside a block");
            match find_ci(rest, "</doc>") {
                Some(end) => {
                    buf.push_str(&rest[..end]);
                    let tail = &rest[end + 6..];
                    if !tail.trim().is_empty() {
                        self.pending = Some((rest_offset + end as u64 + 6, tail.to_owned()));
                    }
                    return Ok(Some(parse_trec_block(*offset, buf)));
                }
                None => {
                    buf.push_str(rest);
                    buf.push('\n');
                }
            }
        }
    }
}

/// Removes the first `<tag>...</tag>` element, returning its inner text.
fn take_element(text: &mut String, tag: &str) -> Option<String> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = find_ci(text, &open)?;
    let inner_start = start + open.len();
    let end = inner_start + find_ci(&text[inner_start..], &close)?;
    let inner = text[inner_start..end].to_owned();
    text.replace_range(start..end + close.len(), " ");
    Some(inner)
}

fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for c in text.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => {
                in_tag = false;
                out.push(' ');
            }
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out.replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_trec_block(offset: u64, block: &mut String) -> Parsed {
    let id = match take_element(block, "DOCNO") {
        Some(id) if !id.trim().is_empty() => id.trim().to_owned(),
        _ => {
            return Parsed::Malformed {
                offset,
                reason: "missing <DOCNO>".into(),
            }
        }
    };
    let title = take_element(block, "HEADLINE")
        .or_else(|| take_element(block, "TITLE"))
        .map(|t| collapse_ws(&strip_tags(&t)))
        .unwrap_or_default();
    let body = strip_tags(block).trim().to_owned();
    Parsed::Doc { id, title, body }
}

/// SMART-style records: `.I id`, `.T` title, `.W` abstract; other fields ignored.
#[derive(Default)]
struct CacmParser {
    pending: Option<(u64, String)>,
}

impl RecordParser for CacmParser {
    fn next_record(
        &mut self,
        lines: &mut LineReader,
        replacements: &mut usize,
    ) -> std::io::Result<Option<Parsed>> {
        let mut current: Option<(u64, String)> = None;
        let mut title = String::new();
        let mut abstract_ = String::new();
        let mut section = ' ';
        loop {
            let next = match self.pending.take() {
                Some(p) => Some(p),
                None => lines.next_line(replacements)?,
            };
            let Some((offset, line)) = next else {
                return Ok(current.map(|(offset, id)| finish_smart(offset, id, &title, &abstract_)));
            };
            if let Some(rest) = line.strip_prefix(".I") {
                if current.is_some() {
                    self.pending = Some((offset, line));
                    let (offset, id) = current.take().expect("checked");
                    return Ok(Some(finish_smart(offset, id, &title, &abstract_)));
                }
                current = Some((offset, rest.trim().to_owned()));
                section = ' ';
                continue;
            }
            if current.is_none() {
                continue;
            }
            if line.len() >= 2
                && line.starts_with('.')
                && line[1..].chars().all(|c| c.is_ascii_uppercase())
            {
                section = line.as_bytes()[1] as char;
                continue;
            }
            let target = match section {
                'T' => &mut title,
                'W' => &mut abstract_,
                _ => continue,
            };
            if !target.is_empty() {
                target.push(' ');
            }
            target.push_str(line.trim());
        }
    }
}

fn finish_smart(offset: u64, id: String, title: &str, abstract_: &str) -> Parsed {
    if id.is_empty() {
        return Parsed::Malformed {
            offset,
            reason: "`.I` line without an id".into(),
        };
    }
    let title = collapse_ws(title);
    let abstract_ = collapse_ws(abstract_);
    let body = match (title.is_empty(), abstract_.is_empty()) {
        (_, true) => title.clone(),
        (true, false) => abstract_,
        (false, false) => format!("{title}\n{abstract_}"),
    };
    Parsed::Doc { id, title, body }
}

#[derive(Deserialize)]
struct JsonRecord {
    #[serde(alias = "doc_id")]
    id: serde_json::Value,
    #[serde(default)]
    title: String,
    #[serde(default, alias = "text")]
    body: String,
}

struct JsonlParser;

impl RecordParser for JsonlParser {
    fn next_record(
        &mut self,
        lines: &mut LineReader,
        replacements: &mut usize,
    ) -> std::io::Result<Option<Parsed>> {
        loop {
            let Some((offset, line)) = lines.next_line(replacements)? else {
                return Ok(None);
            };
            if line.trim().is_empty() {
                continue;
            }
            let parsed = match serde_json::from_str::<JsonRecord>(&line) {
                Ok(rec) => match rec.id {
                    serde_json::Value::String(s) => Parsed::Doc {
                        id: s.trim().to_owned(),
                        title: rec.title,
                        body: rec.body,
                    },
                    serde_json::Value::Number(n) => Parsed::Doc {
                        id: n.to_string(),
                        title: rec.title,
                        body: rec.body,
                    },
                    _ => Parsed::Malformed {
                        offset,
                        reason: "`id` must be a string or number".into(),
                    },
                },
                Err(e) => Parsed::Malformed {
                    offset,
                    reason: e.to_string(),
                },
            };
            return Ok(Some(parsed));
        }
    }
}

fn list_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    if path.is_file() {
        return Ok(vec![path.to_owned()]);
    }
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::io(path, e.into()))?;
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if entry.file_type().is_file() && !hidden {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// Streaming iterator over the documents of a collection.
pub struct DocumentStream {
    format: SourceFormat,
    files: std::vec::IntoIter<PathBuf>,
    current: Option<(PathBuf, LineReader, Box<dyn RecordParser>)>,
    seen: HashSet<String>,
    stats: IngestStats,
    failed: bool,
}

impl DocumentStream {
    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn format(&self) -> SourceFormat {
        self.format
    }

    fn accept(&mut self, path: &Path, parsed: Parsed) -> Option<Result<RawDocument>> {
        match parsed {
            Parsed::Malformed { offset, reason } => {
                log::warn!(
                    "{}: skipping malformed record at byte {offset}: {reason}",
                    path.display()
                );
                self.stats.skipped.push(SkippedRecord {
                    path: path.to_owned(),
                    offset,
                    reason,
                });
                None
            }
            Parsed::Doc { id, title, body } => {
                let id = id.trim().to_owned();
                if id.is_empty() {
                    self.stats.skipped.push(SkippedRecord {
                        path: path.to_owned(),
                        offset: 0,
                        reason: "empty document id".into(),
                    });
                    return None;
                }
                if !self.seen.insert(id.clone()) {
                    self.failed = true;
                    return Some(Err(Error::DuplicateDocId(id)));
                }
                self.stats.documents += 1;
                Some(Ok(RawDocument {
                    doc_id: id,
                    title,
                    body,
                    source_format: self.format,
                }))
            }
        }
    }

    fn next_plain(&mut self) -> Option<Result<RawDocument>> {
        loop {
            let path = self.files.next()?;
            let mut bytes = Vec::new();
            let read = open_reader(&path)
                .and_then(|mut r| r.read_to_end(&mut bytes).map_err(|e| Error::io(&path, e)));
            if let Err(e) = read {
                self.failed = true;
                return Some(Err(e));
            }
            let body = decode_lossy(&bytes, &mut self.stats.decode_replacements);
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let name = name.strip_suffix(".gz").unwrap_or(&name).to_owned();
            if let Some(item) = self.accept(
                &path,
                Parsed::Doc {
                    id: name,
                    title: String::new(),
                    body,
                },
            ) {
                return Some(item);
            }
        }
    }
}

impl Iterator for DocumentStream {
    type Item = Result<RawDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.format == SourceFormat::PlainDir {
            return self.next_plain();
        }
        loop {
            if self.current.is_none() {
                let path = self.files.next()?;
                let reader = match open_reader(&path) {
                    Ok(r) => r,
                    Err(e) => {
                        self.failed = true;
                        return Some(Err(e));
                    }
                };
                let parser: Box<dyn RecordParser> = match self.format {
                    SourceFormat::TrecSgml => Box::new(TrecParser::default()),
                    SourceFormat::Cacm => Box::new(CacmParser::default()),
                    SourceFormat::Jsonl => Box::new(JsonlParser),
                    SourceFormat::PlainDir => unreachable!(),
                };
                self.current = Some((path, LineReader::new(reader), parser));
            }
            let (path, lines, parser) = self.current.as_mut().expect("just set");
            match parser.next_record(lines, &mut self.stats.decode_replacements) {
                Ok(Some(parsed)) => {
                    let path = path.clone();
                    if let Some(item) = self.accept(&path, parsed) {
                        return Some(item);
                    }
                }
                Ok(None) => self.current = None,
                Err(e) => {
                    let path = path.clone();
                    self.failed = true;
                    return Some(Err(Error::io(path, e)));
                }
            }
        }
    }
}

/// Opens a collection. `path` may be a single file or a directory, which is
/// walked recursively in file-name order. Files ending in `.gz` are decompressed.
pub fn ingest_collection(path: &Path, format: SourceFormat) -> Result<DocumentStream> {
    let files = list_files(path)?;
    Ok(DocumentStream {
        format,
        files: files.into_iter(),
        current: None,
        seen: HashSet::new(),
        stats: IngestStats::default(),
        failed: false,
    })
}

/// Serializes documents as JSON lines with fields `id`, `title`, `body`.
pub fn write_jsonl<'a, W: Write>(
    docs: impl IntoIterator<Item = &'a RawDocument>,
    mut out: W,
) -> std::io::Result<()> {
    for doc in docs {
        let line = serde_json::json!({ "id": doc.doc_id, "title": doc.title, "body": doc.body });
        writeln!(out, "{line}")?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicFormat {
    #[serde(alias = "trec")]
    TrecTopics,
    Tsv,
    /// SMART-style query files (`.I` / `.W`), as distributed with CACM.
    Smart,
}

impl FromStr for TopicFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trec" | "trec_topics" => Ok(TopicFormat::TrecTopics),
            "tsv" => Ok(TopicFormat::Tsv),
            "smart" => Ok(TopicFormat::Smart),
            other => Err(Error::Config(format!(
                "unknown topic format `{other}` (expected trec_topics|tsv|smart)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicField {
    #[default]
    Title,
    #[serde(alias = "title+description")]
    TitleDescription,
}

impl FromStr for TopicField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "title" => Ok(TopicField::Title),
            "title+description" | "title_description" => Ok(TopicField::TitleDescription),
            other => Err(Error::Config(format!(
                "unknown topic field `{other}` (expected title|title+description)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub topic_id: String,
    pub title: String,
    pub description: Option<String>,
}

impl Topic {
    pub fn query_text(&self, field: TopicField) -> String {
        match (field, &self.description) {
            (TopicField::TitleDescription, Some(desc)) => format!("{} {}", self.title, desc),
            _ => self.title.clone(),
        }
    }
}

/// Topics that parsed, plus one message per rejected topic.
#[derive(Debug, Clone, Default)]
pub struct ParsedTopics {
    pub topics: Vec<Topic>,
    pub rejected: Vec<String>,
}

fn push_topic(
    out: &mut ParsedTopics,
    id: String,
    title: String,
    description: Option<String>,
    where_: String,
) {
    let id = id.trim().to_owned();
    let title = collapse_ws(&title);
    if id.is_empty() {
        out.rejected.push(format!("{where_}: missing topic id"));
    } else if title.is_empty() {
        out.rejected
            .push(format!("{where_}: topic {id} has no title"));
    } else {
        let description = description
            .map(|d| collapse_ws(&d))
            .filter(|d| !d.is_empty());
        out.topics.push(Topic {
            topic_id: id,
            title,
            description,
        });
    }
}

fn parse_tsv_topics(text: &str) -> ParsedTopics {
    let mut out = ParsedTopics::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let id = cols.next().unwrap_or("").to_owned();
        let title = cols.next().unwrap_or("").to_owned();
        let desc = cols.next().map(str::to_owned);
        push_topic(&mut out, id, title, desc, format!("line {}", i + 1));
    }
    out
}

/// Splits a TREC `<top>` block into (tag, content) pairs. Content runs from
/// the end of an opening tag to the next `<`, so both closed and unclosed
/// field tags are handled.
fn trec_fields(block: &str) -> Vec<(String, String)> {
    let mut fields = Vec::new();
    let mut rest = block;
    while let Some(open) = rest.find('<') {
        let Some(close) = rest[open..].find('>') else {
            break;
        };
        let tag = rest[open + 1..open + close].trim().to_ascii_lowercase();
        rest = &rest[open + close + 1..];
        let end = rest.find('<').unwrap_or(rest.len());
        if !tag.starts_with('/') {
            fields.push((tag, rest[..end].to_owned()));
        }
        rest = &rest[end..];
    }
    fields
}

fn strip_label(text: &str, labels: &[&str]) -> String {
    let t = text.trim();
    for label in labels {
        if t.len() >= label.len() && t[..label.len()].eq_ignore_ascii_case(label) {
            return t[label.len()..].trim().to_owned();
        }
    }
    t.to_owned()
}

fn parse_trec_topics(text: &str) -> ParsedTopics {
    let mut out = ParsedTopics::default();
    let lower = text.to_ascii_lowercase();
    let mut from = 0;
    let mut n = 0;
    while let Some(rel) = lower[from..].find("<top>") {
        let start = from + rel + 5;
        let end = lower[start..]
            .find("</top>")
            .map_or(text.len(), |e| start + e);
        n += 1;
        let (mut id, mut title, mut desc) = (String::new(), String::new(), None);
        for (tag, content) in trec_fields(&text[start..end]) {
            match tag.as_str() {
                "num" => id = strip_label(&content, &["Number:"]),
                "title" => title = strip_label(&content, &["Topic:", "Title:"]),
                "desc" => desc = Some(strip_label(&content, &["Description:"])),
                _ => {}
            }
        }
        push_topic(&mut out, id, title, desc, format!("topic block {n}"));
        from = (end + 6).min(text.len());
    }
    out
}

fn parse_smart_topics(text: &str) -> ParsedTopics {
    let mut out = ParsedTopics::default();
    let mut current: Option<(String, String)> = None;
    let mut section = ' ';
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(".I") {
            if let Some((id, body)) = current.take() {
                let where_ = format!("query {id}");
                push_topic(&mut out, id, body, None, where_);
            }
            current = Some((rest.trim().to_owned(), String::new()));
            section = ' ';
        } else if line.len() >= 2
            && line.starts_with('.')
            && line[1..].chars().all(|c| c.is_ascii_uppercase())
        {
            section = line.as_bytes()[1] as char;
        } else if section == 'W' {
            if let Some((_, body)) = current.as_mut() {
                body.push(' ');
                body.push_str(line);
            }
        }
    }
    if let Some((id, body)) = current {
        let where_ = format!("query {id}");
        push_topic(&mut out, id, body, None, where_);
    }
    out
}

pub fn parse_topics(text: &str, format: TopicFormat) -> ParsedTopics {
    match format {
        TopicFormat::Tsv => parse_tsv_topics(text),
        TopicFormat::TrecTopics => parse_trec_topics(text),
        TopicFormat::Smart => parse_smart_topics(text),
    }
}

/// Reads a topic file. Topics without a title are skipped with a warning.
pub fn ingest_topics(path: &Path, format: TopicFormat) -> Result<Vec<Topic>> {
    let mut bytes = Vec::new();
    open_reader(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let parsed = parse_topics(&text, format);
    for msg in &parsed.rejected {
        log::warn!("{}: {msg}", path.display());
    }
    Ok(parsed.topics)
}
