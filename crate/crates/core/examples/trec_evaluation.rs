//! TREC-format runs and qrels, rank metrics, paired t-test and the temporal
//! profile of relevant documents retrieved at depth R.
//!
//! cargo run --example trec_evaluation

use temporafed::eval::{evaluate, paired_ttest, read_qrels, read_run, temporal_rprec_profile};
use temporafed::temporal::DAY;

const QRELS: &str = "MB1 0 a 2\nMB1 0 b 1\nMB1 0 c 0\nMB1 0 d 1\nMB2 0 x 1\nMB2 0 y 2\n";
const RUN_A: &str = "MB1 Q0 a 1 3.2 sysA\nMB1 Q0 c 2 2.9 sysA\nMB1 Q0 b 3 2.5 sysA\nMB1 Q0 d 4 1.0 sysA\nMB2 Q0 z 1 4.0 sysA\nMB2 Q0 y 2 3.0 sysA\n";
const RUN_B: &str = "MB1 Q0 c 1 9.0 sysB\nMB1 Q0 e 2 8.0 sysB\nMB1 Q0 a 3 7.0 sysB\nMB2 Q0 y 1 5.0 sysB\nMB2 Q0 x 2 4.0 sysB\n";

fn main() -> temporafed::Result<()> {
    let qrels = read_qrels(QRELS.as_bytes(), "qrels")?;
    let a = read_run(RUN_A.as_bytes(), "runA")?;
    let b = read_run(RUN_B.as_bytes(), "runB")?;
    let day_of = |d: &str| -> Option<i64> {
        Some(match d {
            "a" | "b" => 0,
            "d" => 3 * DAY,
            _ => DAY,
        })
    };
    let ra = evaluate(&a, &qrels, None, Some(&day_of), DAY)?;
    let rb = evaluate(&b, &qrels, None, Some(&day_of), DAY)?;
    print!("{}\n{}", ra.to_csv(), rb.to_csv());
    println!("paired t-test on AP: {:?}", paired_ttest(&ra.ap_vector(), &rb.ap_vector())?);

    let profile = temporal_rprec_profile(&a.doc_ids("MB1"), &qrels, "MB1", day_of, DAY)?.expect("judged query");
    println!(
        "MB1 relevant per day {:?}, retrieved in top R {:?}, EMD {:.3}",
        profile.truth_counts, profile.retrieved_counts, profile.emd
    );
    print!("round trip:\n{}", a.to_trec());
    Ok(())
}
