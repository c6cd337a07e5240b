use std::fmt;

/// One checked identity: worst residual over all trials against a tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub trials: usize,
    pub max_residual: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_residual.is_finite() && self.max_residual <= self.tolerance
    }
}

/// Structured pass/fail record of a verification suite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report {
            title: title.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, trials: usize, max_residual: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.into(),
            trials,
            max_residual,
            tolerance,
        });
    }

    /// Folds a new residual into the named check, creating it if needed.
    pub fn record(&mut self, name: &str, residual: f64, tolerance: f64) {
        match self.checks.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.trials += 1;
                if !(residual <= c.max_residual) {
                    c.max_residual = residual;
                }
            }
            None => self.push(name, 1, residual, tolerance),
        }
    }

    pub fn merge(&mut self, other: Report) {
        for c in other.checks {
            match self.checks.iter_mut().find(|x| x.name == c.name) {
                Some(x) => {
                    x.trials += c.trials;
                    if !(c.max_residual <= x.max_residual) {
                        x.max_residual = c.max_residual;
                    }
                }
                None => self.checks.push(c),
            }
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }

    /// CSV rows `check,trials,max_residual,tolerance,status`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,trials,max_residual,tolerance,status\n");
        for c in &self.checks {
            s.push_str(&format!(
                "{},{},{:.6e},{:.1e},{}\n",
                c.name,
                c.trials,
                c.max_residual,
                c.tolerance,
                if c.passed() { "pass" } else { "fail" }
            ));
        }
        s
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.title.is_empty() {
            writeln!(f, "# {}", self.title)?;
        }
        for c in &self.checks {
            writeln!(
                f,
                "{:<40} {:>6} {:>12.3e} {}",
                c.name,
                c.trials,
                c.max_residual,
                if c.passed() { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}
