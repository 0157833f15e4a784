//! Bookkeeping for the acceptance run: each criterion yields a verdict and
//! a one-line detail, printed as `PASS name: detail` or `FAIL name: detail`.

/// A verdict with its detail; an error counts as a failure.
pub type Outcome = anyhow::Result<(bool, String)>;

#[derive(Debug, Default)]
pub struct Tally {
    pub passed: usize,
    pub failed: usize,
}

impl Tally {
    /// Prints the verdict line and counts it.
    pub fn record(&mut self, name: &str, outcome: Outcome) -> bool {
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e:#}")));
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        pass
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// `|value − target| ≤ rel·target`.
pub fn within_band(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

/// Errors to four decimals, `-` where an order produced none.
pub fn fmt_errors(errors: &[Option<f64>]) -> String {
    let cells: Vec<String> = errors.iter().map(|e| e.map_or_else(|| "-".into(), |v| format!("{v:.4}"))).collect();
    cells.join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_is_relative_and_inclusive() {
        assert!(within_band(0.015, 0.01, 0.5));
        assert!(within_band(0.005, 0.01, 0.5));
        assert!(!within_band(0.0151, 0.01, 0.5));
        assert!(!within_band(0.0049, 0.01, 0.5));
    }

    #[test]
    fn tally_counts_errors_as_failures() {
        let mut t = Tally::default();
        assert!(t.record("a", Ok((true, "fine".into()))));
        assert!(!t.record("b", Err(anyhow::anyhow!("broken"))));
        assert!(!t.record("c", Ok((false, "off".into()))));
        assert_eq!((t.passed, t.failed), (1, 2));
        assert!(!t.all_passed());
    }

    #[test]
    fn missing_orders_print_as_dashes() {
        assert_eq!(fmt_errors(&[Some(0.12345), None]), "0.1235, -");
    }
}
