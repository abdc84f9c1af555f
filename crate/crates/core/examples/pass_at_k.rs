//! Unbiased pass@k for a few (n, c) pairs and an aggregate over tasks.

use codeeval::metrics::{aggregate_pass_at_k, format_percent, pass_at_k, pass_rate, TaskSample};

pub fn main() {
    for (n, c, k) in [(1, 1, 1), (5, 2, 1), (5, 2, 2), (10, 3, 5), (200, 7, 100)] {
        let s = TaskSample::new("t", n, c).unwrap();
        println!("n={n:<3} c={c:<2} k={k:<3} pass@k={:.6}", pass_at_k(&s, k).unwrap());
    }

    let suite = [
        TaskSample::new("a", 5, 5).unwrap(),
        TaskSample::new("b", 5, 2).unwrap(),
        TaskSample::new("c", 5, 0).unwrap(),
    ];
    for k in [1, 2, 5] {
        println!(
            "suite pass@{k} = {}",
            format_percent(aggregate_pass_at_k(&suite, k).unwrap())
        );
    }

    println!("pass rate 68/121 = {}", format_percent(pass_rate(68, 121).unwrap()));
    println!("pass@10 with n=5: {}", pass_at_k(&suite[0], 10).unwrap_err());
}
