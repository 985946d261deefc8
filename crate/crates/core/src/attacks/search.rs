use super::{AttackError, AttackResult, Result};

/// Log-space bisection over the penalty weight λ.
///
/// Starts at the geometric mean of `range`. A successful run raises λ (more
/// weight on imperceptibility), a failed one lowers it; the bracket halves
/// in log space each step. Returns the successful result with the smallest
/// `perceptibility`, or the last failure when nothing succeeded.
pub fn binary_search_lambda(
    range: (f64, f64),
    steps: usize,
    mut run: impl FnMut(f64) -> Result<AttackResult>,
    perceptibility: impl Fn(&AttackResult) -> f64,
) -> Result<(f64, AttackResult)> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo <= hi) || steps == 0 {
        return Err(AttackError::Config(format!("bad lambda search [{lo}, {hi}] x {steps}")));
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut best: Option<(f64, f64, AttackResult)> = None;
    let mut last_failure = None;
    for _ in 0..steps {
        let lambda = ((a + b) / 2.0).exp();
        let mut r = run(lambda)?;
        r.lambda = Some(lambda);
        if r.success {
            let p = perceptibility(&r);
            if best.as_ref().map_or(true, |(bp, _, _)| p < *bp) {
                best = Some((p, lambda, r));
            }
            a = lambda.ln();
        } else {
            last_failure = Some((lambda, r));
            b = lambda.ln();
        }
    }
    Ok(match best {
        Some((_, lambda, r)) => (lambda, r),
        None => last_failure.expect("at least one step ran"),
    })
}
