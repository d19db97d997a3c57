//! Security metrics for one prompt's samples, and a seed-level aggregate
//! with a 95% t-interval.

use constrained_decoding::metrics::{aggregate, pass_at_k, secure_at_k_pass, secure_pass_at_k, PromptMetrics, SampleLabel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // nine copies of one vulnerable completion and one secure one
    let mut labels = vec![SampleLabel::new(true, true, false, "strcpy(buf, s);")?; 9];
    labels.push(SampleLabel::new(true, true, true, "strncpy(buf, s, n);")?);

    let m = PromptMetrics::from_labels(&labels, &[1, 5, 10])?;
    println!("counts: {:?}", m.counts);
    println!("SVEN-SR:        {:.3}", m.sven_sr);
    for k in [1, 5, 10] {
        println!(
            "k={k:>2}  pass@k {:.4}  secure-pass@k {:.4}  secure@k_pass {:.4}",
            m.pass_at_k[&k], m.secure_pass_at_k[&k], m.secure_at_k_pass[&k]
        );
    }

    println!("pass@5 with n=20, c=3:           {:.6}", pass_at_k(20, 3, 5)?);
    println!("secure-pass@5 with n=20, sp=2:   {:.6}", secure_pass_at_k(20, 2, 5)?);
    println!("secure@5_pass with n_p=4, sp=1:  {:.6}", secure_at_k_pass(4, 1, 5)?);

    let per_seed = vec![vec![0.2, 0.4, 0.1], vec![0.3, 0.5, 0.0], vec![0.25, 0.35, 0.2]];
    let agg = aggregate(&per_seed)?;
    println!("seed means {:?}: {:.4} +/- {:.4}", agg.per_seed_means, agg.mean, agg.ci95_half_width);
    Ok(())
}
