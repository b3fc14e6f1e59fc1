//! Tokenization, metadata extraction and corpus filtering.
//!
//! cargo run --example ingest_and_filter

use std::collections::HashMap;

use temporafed::corpus::{filter_account, ingest, tokenize, AccountStats, Document, IngestOptions};

const POSTS: &str = r#"{"id":"1","timestamp":1360540800,"text":"Argo wins Best Picture!! :) http://t.co/abc #oscars","followers_count":5400,"account_id":"filmdesk"}
{"id":"2","timestamp":1360541000,"text":"RT @variety: Argo wins Best Picture","account_id":"filmdesk"}
{"id":"3","timestamp":1360541500,"text":"@benaffleck congrats, what a night at 10pm","account_id":"chatty"}
{"id":"4","timestamp":1360542000,"text":"Red carpet live from the Dolby Theatre","account_id":"filmdesk"}
not json at all
{"id":"1","timestamp":1360540800,"text":"Argo wins Best Picture (corrected)","account_id":"filmdesk"}
"#;

fn main() -> temporafed::Result<()> {
    println!("tokens: {:?}", tokenize("Argo wins Best Picture!! :) http://t.co/abc #oscars at 10pm"));
    let doc = Document::new("x", 0, "@benaffleck Argo wins #oscars http://t.co/abc");
    println!("metadata: {:?}", doc.metadata);

    // curated accounts: posting rate and reply ratio over a 30-day crawl
    let mut accounts = HashMap::new();
    for stats in [
        AccountStats::from_counts("filmdesk", 900, 40, 30.0),
        AccountStats::from_counts("chatty", 600, 400, 30.0),
    ] {
        println!("{:<9} posts/day {:>5.1} reply ratio {:.2} dropped {}", stats.account_id, stats.posts_per_day, stats.reply_ratio, filter_account(&stats));
        accounts.insert(stats.account_id.clone(), stats);
    }

    let options = IngestOptions {
        accounts: Some(&accounts),
        ..IngestOptions::default()
    };
    let (corpus, report) = ingest(POSTS.as_bytes(), "inline", &options)?;
    println!("{report:#?}");
    for d in corpus.documents() {
        println!("{} {} {:?}", d.doc_id, d.timestamp, d.tokens);
    }
    Ok(())
}
