use crate::error::{GeegaError, Result};

/// Composite Simpson integral of samples `y` at strictly ascending `x`.
///
/// Pairs of intervals use the unequal-spacing Simpson weights. With an odd
/// interval count the last interval is integrated by the trapezoid rule;
/// two points reduce to a single trapezoid.
pub fn simpson_integrate(y: &[f64], x: &[f64]) -> Result<f64> {
    if y.len() != x.len() {
        return Err(GeegaError::Parameter(format!(
            "simpson: {} samples but {} abscissae",
            y.len(),
            x.len()
        )));
    }
    if x.len() < 2 {
        return Err(GeegaError::Parameter("simpson needs at least two points".into()));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GeegaError::Parameter("simpson abscissae must be strictly ascending".into()));
    }
    let intervals = x.len() - 1;
    let paired = intervals - intervals % 2;
    let mut total = 0.0;
    for i in (0..paired).step_by(2) {
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        let hs = h0 + h1;
        total += hs / 6.0
            * ((2.0 - h1 / h0) * y[i] + hs * hs / (h0 * h1) * y[i + 1] + (2.0 - h0 / h1) * y[i + 2]);
    }
    if paired < intervals {
        let i = intervals - 1;
        total += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_low_degree() {
        let sq = simpson_integrate(&[0.0, 1.0, 4.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((sq - 8.0 / 3.0).abs() < 1e-15);
        let cube = simpson_integrate(&[0.0, 0.125, 1.0], &[0.0, 0.5, 1.0]).unwrap();
        assert!((cube - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_over_any_grid() {
        for n in 2..9 {
            let x: Vec<f64> = (0..n).map(|i| 1.5 + (i as f64).powf(1.3)).collect();
            let got = simpson_integrate(&vec![1.0; n], &x).unwrap();
            assert!((got - (x[n - 1] - x[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_on_nonuniform_pairs() {
        let x = [0.0, 0.3, 1.0, 1.2, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v - 2.0 * v).collect();
        let want = 8.0 - 4.0;
        assert!((simpson_integrate(&y, &x).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(simpson_integrate(&[1.0], &[0.0]).is_err());
        assert!(simpson_integrate(&[1.0, 2.0], &[0.0]).is_err());
        assert!(simpson_integrate(&[1.0, 2.0, 3.0], &[0.0, 2.0, 1.0]).is_err());
        assert!(simpson_integrate(&[1.0, 2.0], &[1.0, 1.0]).is_err());
    }
}
