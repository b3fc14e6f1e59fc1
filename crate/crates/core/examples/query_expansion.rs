//! External relevance models with and without time weighting, plus the
//! discrete-period variant, and interpolation with the original query.
//!
//! cargo run --example query_expansion

use temporafed::corpus::Document;
use temporafed::feedback::{
    discrete_time_relevance_model, interpolate_query, query_mle, relevance_model_external, time_based_relevance_model,
};
use temporafed::retrieval::QueryModel;
use temporafed::temporal::DAY;
use temporafed::verticals::{build_verticals, select_verticals, SelectionParams};

fn main() -> temporafed::Result<()> {
    let t0 = 1_360_540_800;
    let mut docs = Vec::new();
    // ceremony-night posts cluster in time; older posts talk about the film
    for i in 0..10 {
        docs.push(Document::new(format!("n{i}"), t0 + i * 1_800, "oscars argo best picture affleck speech"));
    }
    for i in 0..6 {
        docs.push(Document::new(format!("o{i}"), t0 - (10 + 7 * i) * DAY, "argo oscars trailer box office"));
    }
    let n = docs.len();
    let verticals = build_verticals(docs, &vec![0; n])?;
    let params = SelectionParams {
        v_sel: 1,
        k_merge: 20,
        n_fb: 20,
        ..SelectionParams::default()
    };
    let terms = ["argo", "oscars"];
    let sel = select_verticals(&verticals, "q", &QueryModel::from_terms(&terms), &params, t0 + DAY)?;

    let rm = relevance_model_external(&verticals, &sel, 8)?;
    let rmt = time_based_relevance_model(&verticals, &sel, 8)?;
    let discrete = discrete_time_relevance_model(&verticals, &sel, DAY, 8)?;
    println!("{:<10} {:>8} {:>8} {:>8}", "term", "RM_E", "RMT_E", "discrete");
    for (t, w) in rm.ranked() {
        println!("{t:<10} {w:>8.4} {:>8.4} {:>8.4}", rmt.weight(t), discrete.weight(t));
    }

    let expanded = interpolate_query(&query_mle(&terms), &rmt, 0.5)?;
    print!("expanded query:\n{}", expanded.to_tsv());
    Ok(())
}
