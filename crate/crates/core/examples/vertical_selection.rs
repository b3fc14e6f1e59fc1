//! Clustering an external collection into verticals and selecting the ones
//! relevant to a query, with their temporal relevance mixture.
//!
//! cargo run --example vertical_selection

use temporafed::corpus::Document;
use temporafed::pipeline::verticals_from;
use temporafed::retrieval::QueryModel;
use temporafed::temporal::DAY;
use temporafed::verticals::{select_verticals, SelectionParams};

fn main() -> temporafed::Result<()> {
    let t0 = 1_360_540_800;
    let mut docs = Vec::new();
    let topics = [
        ("film", ["oscar", "argo", "affleck", "picture", "academy"]),
        ("sport", ["striker", "goal", "league", "transfer", "keeper"]),
        ("space", ["meteor", "asteroid", "orbit", "nasa", "telescope"]),
    ];
    for (k, (name, vocab)) in topics.iter().enumerate() {
        for i in 0..30 {
            let text = format!("{} {} {}", vocab[i % 5], vocab[(i + 1) % 5], vocab[(i + 3) % 5]);
            let t = t0 + (k as i64 * 10 + (i as i64 % 4)) * DAY;
            docs.push(Document::new(format!("{name}{i:02}"), t, text));
        }
    }
    let verticals = verticals_from(docs, 3, 7)?;
    for v in &verticals {
        println!("vertical {} '{}' with {} docs", v.id, v.label, v.index.doc_count());
    }

    let params = SelectionParams {
        v_sel: 2,
        k_merge: 20,
        n_fb: 10,
        ..SelectionParams::default()
    };
    let query = QueryModel::from_terms(&["argo", "meteor", "academy"]);
    let sel = select_verticals(&verticals, "q", &query, &params, t0 + 40 * DAY)?;
    for s in &sel.selected {
        println!("selected {} weight {:.3} ({} of {} merged)", s.vertical_id, s.weight, s.merged_count, sel.merged_size);
    }
    for day in [0, 2, 10, 12, 20] {
        println!("external temporal relevance at day {day:>2}: {:.3e}", sel.density_at((t0 + day * DAY) as f64));
    }
    Ok(())
}
