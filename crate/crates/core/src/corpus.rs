//! Document ingestion: tokenization, retweet/language/account filtering and
//! the immutable [`Corpus`] handed to the indexer.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Accounts posting less than this per day are dropped from external collections.
pub const MIN_POSTS_PER_DAY: f64 = 10.0;
/// Accounts whose replies/posts ratio exceeds this are dropped.
pub const MAX_REPLY_RATIO: f64 = 1.0 / 3.0;

/// Emoticons removed before punctuation splitting. Only entries containing
/// letters matter; pure-punctuation emoticons vanish during splitting anyway.
const EMOTICONS: &[&str] = &[
    ":)", ":-)", ":(", ":-(", ";)", ";-)", ":D", ":-D", ";D", ":P", ":-P", ":p", ":-p", ";P",
    ";p", ":o", ":O", ":-o", ":-O", ":/", ":-/", ":|", ":'(", ":*", "<3", "</3", "xD", "XD",
    "xP", "XP", "D:", "^_^", "^^", "-_-", "o_O", "O_o", "o.O", "O.o", "=)", "=(", "=D", "=P",
    "8)", "B)", ":]", ":[", ":3", ":S", ":s", ":x", ":X",
];

struct Patterns {
    url: Regex,
    email: Regex,
    mention: Regex,
    hashtag: Regex,
    time: Regex,
}

fn patterns() -> &'static Patterns {
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| Patterns {
        url: Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap(),
        email: Regex::new(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+").unwrap(),
        mention: Regex::new(r"@\w+").unwrap(),
        hashtag: Regex::new(r"#[\p{L}\p{N}_]+").unwrap(),
        time: Regex::new(r"(?i)^\d{1,2}(?::\d{2}){1,2}(?:[ap]\.?m\.?)?$|^\d{1,2}[ap]\.?m\.?$").unwrap(),
    })
}

/// Split a post into normalized terms.
///
/// Text is NFC-normalized and lowercased. URLs, e-mail addresses, @mentions,
/// emoticons, clock times and bare numbers are dropped; hashtags keep their
/// word without the `#`.
pub fn tokenize(text: &str) -> Vec<String> {
    let p = patterns();
    let text: String = text.nfc().collect();
    let text = p.url.replace_all(&text, " ");
    let text = p.email.replace_all(&text, " ");
    let text = p.mention.replace_all(&text, " ");

    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let bare = raw.trim_matches(|c: char| matches!(c, ',' | '.' | '!' | '?' | ';' | '"' | '(' | ')'));
        if EMOTICONS.contains(&raw) || p.time.is_match(bare) {
            continue;
        }
        let lower = raw.to_lowercase();
        for piece in lower.split(|c: char| !(c.is_alphanumeric() || c == '\'')) {
            let piece = piece.trim_matches('\'');
            if piece.is_empty() || piece.chars().all(|c| c.is_numeric() || c == '\'') {
                continue;
            }
            out.push(piece.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub url_count: u32,
    pub hashtag_count: u32,
    pub mention_count: u32,
    pub is_reply: bool,
    pub is_retweet: bool,
    pub statuses_count: u64,
    pub followers_count: u64,
    pub doc_length: u32,
}

/// One timestamped post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub text: String,
    pub tokens: Vec<String>,
    pub metadata: Metadata,
    pub account_id: Option<String>,
}

/// Raw input record, one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub timestamp: i64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followers_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statuses_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_reply: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_retweet: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account_id: Option<String>,
}

impl Document {
    pub fn from_record(record: Record) -> Result<Self> {
        if record.timestamp < 0 {
            return Err(Error::InvalidParameter(format!(
                "negative timestamp {} for document {}",
                record.timestamp, record.id
            )));
        }
        let p = patterns();
        let tokens = tokenize(&record.text);
        let url_count = p.url.find_iter(&record.text).count() as u32;
        let stripped = p.url.replace_all(&record.text, " ");
        let stripped = p.email.replace_all(&stripped, " ");
        let hashtag_count = p.hashtag.find_iter(&stripped).count() as u32;
        let mention_count = p.mention.find_iter(&stripped).count() as u32;
        let is_reply = record
            .is_reply
            .unwrap_or_else(|| record.text.trim_start().starts_with('@'));
        let metadata = Metadata {
            url_count,
            hashtag_count,
            mention_count,
            is_reply,
            is_retweet: record.is_retweet.unwrap_or(false),
            statuses_count: record.statuses_count.unwrap_or(0),
            followers_count: record.followers_count.unwrap_or(0),
            doc_length: tokens.len() as u32,
        };
        Ok(Document {
            doc_id: record.id,
            timestamp: record.timestamp,
            text: record.text,
            tokens,
            metadata,
            account_id: record.account_id,
        })
    }

    /// Convenience constructor used by tests and examples.
    pub fn new(doc_id: impl Into<String>, timestamp: i64, text: impl Into<String>) -> Self {
        Self::from_record(Record {
            id: doc_id.into(),
            timestamp,
            text: text.into(),
            ..Record::default()
        })
        .expect("non-negative timestamp")
    }
}

/// Per-account posting statistics used to clean external collections.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountStats {
    pub account_id: String,
    pub posts_per_day: f64,
    pub reply_ratio: f64,
}

impl AccountStats {
    pub fn from_counts(account_id: impl Into<String>, posts: u64, replies: u64, days: f64) -> Self {
        let reply_ratio = if posts > 0 {
            replies as f64 / posts as f64
        } else {
            0.0
        };
        let posts_per_day = if days > 0.0 { posts as f64 / days } else { 0.0 };
        AccountStats {
            account_id: account_id.into(),
            posts_per_day,
            reply_ratio,
        }
    }
}

/// Returns true when the post is a retweet and must be discarded.
pub fn filter_retweets(doc: &Document) -> bool {
    doc.metadata.is_retweet || doc.text.trim_start().starts_with("RT ")
}

/// Returns true when the account is low-volume or reply-heavy.
pub fn filter_account(stats: &AccountStats) -> bool {
    stats.posts_per_day < MIN_POSTS_PER_DAY || stats.reply_ratio > MAX_REPLY_RATIO
}

pub trait LanguageClassifier: Send + Sync {
    /// Language label (ISO 639-1) for `text`.
    fn classify(&self, text: &str) -> std::result::Result<String, String>;
}

/// Labels every text as English.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnglishStub;

impl LanguageClassifier for EnglishStub {
    fn classify(&self, _text: &str) -> std::result::Result<String, String> {
        Ok("en".to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageVerdict {
    pub discard: bool,
    pub warning: Option<String>,
}

/// Discards non-English posts. Classifier failures keep the post.
pub fn filter_language(doc: &Document, classifier: &dyn LanguageClassifier) -> LanguageVerdict {
    match classifier.classify(&doc.text) {
        Ok(label) => LanguageVerdict {
            discard: label != "en",
            warning: None,
        },
        Err(e) => LanguageVerdict {
            discard: false,
            warning: Some(format!("language classifier failed on {}: {e}", doc.doc_id)),
        },
    }
}

/// Immutable collection of kept documents in ingestion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    time_span: (i64, i64),
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let min = documents.iter().map(|d| d.timestamp).min();
        let max = documents.iter().map(|d| d.timestamp).max();
        match (min, max) {
            (Some(lo), Some(hi)) => Ok(Corpus {
                documents,
                time_span: (lo, hi),
            }),
            _ => Err(Error::EmptyCorpus),
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }

    pub fn time_span(&self) -> (i64, i64) {
        self.time_span
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub read: usize,
    pub malformed: usize,
    pub retweets: usize,
    pub non_english: usize,
    pub filtered_accounts: usize,
    pub duplicates: usize,
    pub warnings: Vec<String>,
}

pub struct IngestOptions<'a> {
    pub classifier: &'a dyn LanguageClassifier,
    /// When set, posts from accounts failing [`filter_account`] are dropped.
    pub accounts: Option<&'a HashMap<String, AccountStats>>,
}

impl Default for IngestOptions<'_> {
    fn default() -> Self {
        IngestOptions {
            classifier: &EnglishStub,
            accounts: None,
        }
    }
}

/// Reads JSON Lines records, applies all filters and builds a [`Corpus`].
pub fn ingest<R: BufRead>(
    reader: R,
    source: &str,
    options: &IngestOptions<'_>,
) -> Result<(Corpus, IngestReport)> {
    let mut report = IngestReport::default();
    let mut docs: Vec<Document> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.read += 1;
        let doc = match serde_json::from_str::<Record>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| Document::from_record(r).map_err(|e| e.to_string()))
        {
            Ok(d) => d,
            Err(e) => {
                report.malformed += 1;
                let msg = format!("{source}:{}: skipped malformed record: {e}", lineno + 1);
                log::warn!("{msg}");
                report.warnings.push(msg);
                continue;
            }
        };
        if filter_retweets(&doc) {
            report.retweets += 1;
            continue;
        }
        if let (Some(accounts), Some(acc)) = (options.accounts, doc.account_id.as_ref()) {
            if accounts.get(acc).is_some_and(filter_account) {
                report.filtered_accounts += 1;
                continue;
            }
        }
        let verdict = filter_language(&doc, options.classifier);
        if let Some(w) = verdict.warning {
            log::warn!("{w}");
            report.warnings.push(w);
        }
        if verdict.discard {
            report.non_english += 1;
            continue;
        }
        match slot.get(&doc.doc_id) {
            Some(&i) => {
                report.duplicates += 1;
                let msg = format!("{source}:{}: duplicate id {}, keeping last", lineno + 1, doc.doc_id);
                log::warn!("{msg}");
                report.warnings.push(msg);
                docs[i] = doc;
            }
            None => {
                slot.insert(doc.doc_id.clone(), docs.len());
                docs.push(doc);
            }
        }
    }
    let corpus = Corpus::new(docs)?;
    Ok((corpus, report))
}

pub fn ingest_path(path: &Path, options: &IngestOptions<'_>) -> Result<(Corpus, IngestReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest(std::io::BufReader::new(file), &path.display().to_string(), options)
}

/// Parses `account_id,posts_per_day,reply_ratio` rows. A header row is skipped.
pub fn read_account_stats<R: BufRead>(reader: R, source: &str) -> Result<HashMap<String, AccountStats>> {
    let mut out = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("account_id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(source, lineno + 1, "expected 3 comma-separated fields"));
        }
        let parse = |s: &str, name: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(source, lineno + 1, format!("bad {name}: {s:?}")))
        };
        let posts_per_day = parse(fields[1], "posts_per_day")?;
        let reply_ratio = parse(fields[2], "reply_ratio")?;
        if posts_per_day < 0.0 || !(0.0..=1.0).contains(&reply_ratio) {
            return Err(Error::parse(source, lineno + 1, "value out of range"));
        }
        out.insert(
            fields[0].to_string(),
            AccountStats {
                account_id: fields[0].to_string(),
                posts_per_day,
                reply_ratio,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks("Argo wins Oscar"), ["argo", "wins", "oscar"]);
        assert_eq!(toks("see http://t.co/x #oscars"), ["see", "oscars"]);
        assert!(toks("").is_empty());
    }

    #[test]
    fn tokenize_removal_classes() {
        assert_eq!(
            toks("@bob mail me at bob@example.com at 10:30pm or 5pm, 2013 :D <3 xD"),
            ["mail", "me", "at", "at", "or"]
        );
        assert_eq!(toks("Best Picture!!! www.oscars.org (Argo)"), ["best", "picture", "argo"]);
        assert_eq!(toks("don't #Oscars2013"), ["don't", "oscars2013"]);
    }

    #[test]
    fn tokenize_nfc() {
        // "e" + combining acute vs precomposed
        assert_eq!(toks("cafe\u{301}"), toks("caf\u{e9}"));
    }

    #[test]
    fn retweet_rules() {
        let mut d = Document::new("1", 0, "breaking news");
        assert!(!filter_retweets(&d));
        d.metadata.is_retweet = true;
        assert!(filter_retweets(&d));
        assert!(filter_retweets(&Document::new("2", 0, "RT @abc news...")));
        assert!(filter_retweets(&Document::new("3", 0, "  RT @abc news...")));
        assert!(!filter_retweets(&Document::new("4", 0, "rt @abc news")));
        assert!(!filter_retweets(&Document::new("5", 0, "RTfoo")));
    }

    #[test]
    fn account_rules() {
        let s = |p, r| AccountStats {
            account_id: "a".into(),
            posts_per_day: p,
            reply_ratio: r,
        };
        assert!(filter_account(&s(5.0, 0.1)));
        assert!(filter_account(&s(50.0, 0.5)));
        assert!(!filter_account(&s(50.0, 0.1)));
        assert!(!filter_account(&s(10.0, 1.0 / 3.0)));
    }

    struct Fixed(std::result::Result<&'static str, &'static str>);
    impl LanguageClassifier for Fixed {
        fn classify(&self, _: &str) -> std::result::Result<String, String> {
            self.0.map(str::to_string).map_err(str::to_string)
        }
    }

    #[test]
    fn language_rules() {
        let d = Document::new("1", 0, "hello");
        assert!(!filter_language(&d, &Fixed(Ok("en"))).discard);
        assert!(filter_language(&d, &Fixed(Ok("pt"))).discard);
        let v = filter_language(&d, &Fixed(Err("boom")));
        assert!(!v.discard);
        assert!(v.warning.is_some());
    }

    #[test]
    fn metadata_counts() {
        let d = Document::new("1", 0, "@a @b look http://x.co/1 https://y.co #one #two #three");
        let m = &d.metadata;
        assert_eq!((m.url_count, m.hashtag_count, m.mention_count), (2, 3, 2));
        assert!(m.is_reply);
        assert_eq!(m.doc_length as usize, d.tokens.len());
    }

    const STREAM: &str = r#"{"id":"1","timestamp":100,"text":"Argo wins Oscar"}
{"id":"2","timestamp":200,"text":"RT @x Argo wins"}
not json
{"id":"3","timestamp":300,"text":"oscars tonight","followers_count":12}
"#;

    #[test]
    fn ingest_filters_and_counts() {
        let (corpus, report) = ingest(STREAM.as_bytes(), "mem", &IngestOptions::default()).unwrap();
        assert_eq!(corpus.doc_count(), 2);
        assert_eq!(report.malformed, 1);
        assert_eq!(report.retweets, 1);
        assert_eq!(corpus.time_span(), (100, 300));
        assert_eq!(corpus.documents()[1].metadata.followers_count, 12);
    }

    #[test]
    fn ingest_duplicates_last_wins() {
        let s = "{\"id\":\"1\",\"timestamp\":1,\"text\":\"a\"}\n{\"id\":\"1\",\"timestamp\":2,\"text\":\"b\"}\n";
        let (corpus, report) = ingest(s.as_bytes(), "mem", &IngestOptions::default()).unwrap();
        assert_eq!(corpus.doc_count(), 1);
        assert_eq!(corpus.documents()[0].text, "b");
        assert_eq!(report.duplicates, 1);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn ingest_all_filtered_is_error() {
        let s = "{\"id\":\"1\",\"timestamp\":1,\"text\":\"RT a\"}\n";
        assert!(matches!(
            ingest(s.as_bytes(), "mem", &IngestOptions::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn ingest_account_filter() {
        let s = "{\"id\":\"1\",\"timestamp\":1,\"text\":\"a\",\"account_id\":\"low\"}\n{\"id\":\"2\",\"timestamp\":1,\"text\":\"b\",\"account_id\":\"news\"}\n";
        let stats = read_account_stats(
            "account_id,posts_per_day,reply_ratio\nlow,2,0.0\nnews,80,0.05\n".as_bytes(),
            "mem",
        )
        .unwrap();
        let opts = IngestOptions {
            accounts: Some(&stats),
            ..IngestOptions::default()
        };
        let (corpus, report) = ingest(s.as_bytes(), "mem", &opts).unwrap();
        assert_eq!(corpus.doc_count(), 1);
        assert_eq!(report.filtered_accounts, 1);
    }

    #[test]
    fn ingest_is_idempotent() {
        let a = ingest(STREAM.as_bytes(), "mem", &IngestOptions::default()).unwrap().0;
        let b = ingest(STREAM.as_bytes(), "mem", &IngestOptions::default()).unwrap().0;
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn tokens_are_clean(s in "[a-zA-Z0-9 #@:/._'!?()-]{0,80}") {
            for t in tokenize(&s) {
                proptest::prop_assert!(!t.chars().any(char::is_whitespace));
                proptest::prop_assert!(!t.contains('#') && !t.contains('@'));
                proptest::prop_assert!(!t.contains("://"));
                proptest::prop_assert!(!t.is_empty());
            }
        }

        #[test]
        fn tokenize_deterministic(s in "\\PC{0,60}") {
            proptest::prop_assert_eq!(tokenize(&s), tokenize(&s));
        }
    }
}
