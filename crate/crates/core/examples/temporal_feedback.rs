//! Kernel density temporal feedback from a pseudo-relevant list, and the
//! earth mover's distance between temporal histograms.
//!
//! cargo run --example temporal_feedback

use temporafed::corpus::{Corpus, Document};
use temporafed::retrieval::{search, Index, QueryModel, Scorer};
use temporafed::temporal::{emd_1d, feedback_density, histogram, TimeHistogram, WeightScheme, DAY, DEFAULT_PERIOD};

fn main() -> temporafed::Result<()> {
    let t0 = 1_360_540_800;
    let mut docs = Vec::new();
    // a burst of on-topic posts around t0 plus scattered mentions
    for i in 0..12 {
        docs.push(Document::new(format!("b{i:02}"), t0 + i * 3_600, "meteor explosion over chelyabinsk video"));
    }
    for i in 0..8 {
        docs.push(Document::new(format!("s{i:02}"), t0 - (5 + 4 * i) * DAY, "meteor shower tonight"));
    }
    let index = Index::build(&Corpus::new(docs)?)?;
    let fb = search(&index, "q", &QueryModel::from_terms(&["meteor"]), Scorer::default(), 15, t0 + 5 * DAY);

    for scheme in [WeightScheme::Score, WeightScheme::Rank] {
        let f = feedback_density(&fb, |d| index.doc(d).timestamp, scheme, DEFAULT_PERIOD)?;
        println!(
            "{scheme}: bandwidth {:.1} h, f(burst) {:.3e}, f(-20 days) {:.3e}",
            f.bandwidth() / 3_600.0,
            f.eval((t0 + 6 * 3_600) as f64),
            f.eval((t0 - 20 * DAY) as f64)
        );
    }

    let origin = TimeHistogram::aligned_origin(t0 - 40 * DAY, DAY);
    let a = histogram(&[t0, t0 + 3_600], &[1.0, 1.0], DAY, origin)?;
    let b = histogram(&[t0 + 2 * DAY], &[1.0], DAY, origin)?;
    println!("EMD between a same-day pair and a post two days later: {}", emd_1d(&a, &b)?);
    Ok(())
}
