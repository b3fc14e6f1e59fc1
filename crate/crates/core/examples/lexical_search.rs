//! Inverted index with query-likelihood, BM25, IDF and recency scoring.
//!
//! cargo run --example lexical_search

use temporafed::corpus::{Corpus, Document};
use temporafed::retrieval::{search, Index, QueryModel, Scorer, DEFAULT_RECENCY_RATE};
use temporafed::temporal::DAY;

fn main() -> temporafed::Result<()> {
    let t0 = 1_360_540_800;
    let corpus = Corpus::new(vec![
        Document::new("d1", t0, "argo wins best picture at the oscars"),
        Document::new("d2", t0 + 2 * DAY, "affleck argo director snub again"),
        Document::new("d3", t0 - 20 * DAY, "argo heist thriller review"),
        Document::new("d4", t0 + DAY, "oscars red carpet dresses"),
        Document::new("d5", t0 + 3 * DAY, "football transfer window closes"),
    ])?;
    let index = Index::build(&corpus)?;
    println!("{} docs, {} terms, avg length {:.2}", index.doc_count(), index.vocabulary_size(), index.avg_doc_length());

    let query = QueryModel::from_terms(&["argo", "oscars"]);
    let query_time = t0 + 4 * DAY;
    for scorer in [
        Scorer::LmDirichlet { mu: 2500.0 },
        Scorer::Bm25 { k1: 1.2, b: 0.75 },
        Scorer::Idf,
        Scorer::Recency {
            mu: 2500.0,
            rate: DEFAULT_RECENCY_RATE,
        },
    ] {
        let list = search(&index, "q1", &query, scorer, 10, query_time);
        let ranked: Vec<String> = list.entries.iter().map(|h| format!("{}:{:.3}", h.doc_id, h.score)).collect();
        println!("{scorer:?}\n  {}", ranked.join("  "));
    }

    // documents published after the query time are never returned
    let early = search(&index, "q1", &query, Scorer::default(), 10, t0);
    println!("as of t0: {:?}", early.doc_ids().collect::<Vec<_>>());
    Ok(())
}
