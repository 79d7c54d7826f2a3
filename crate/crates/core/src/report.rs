use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// `s = −1` for minimisation, `s = +1` for maximisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    pub fn value(self) -> f64 {
        match self {
            Self::Minimize => -1.0,
            Self::Maximize => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Minimize => Self::Maximize,
            Self::Maximize => Self::Minimize,
        }
    }

    /// Nonnegative excess of the terminal sign condition on `m`: a
    /// minimiser needs `m ≤ 0`, a maximiser `m ≥ 0`.
    pub fn terminal_excess(self, m: f64) -> f64 {
        (-self.value() * m).max(0.0)
    }
}

impl FromStr for Sense {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "-1" | "min" | "minimize" => Ok(Self::Minimize),
            "1" | "+1" | "max" | "maximize" => Ok(Self::Maximize),
            other => Err(Error::Config(format!("sense must be -1 or +1, got '{other}'"))),
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if *self == Self::Minimize { "-1" } else { "+1" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if *self == Self::Accept { "ACCEPT" } else { "REJECT" })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderResiduals {
    pub riccati_sup_eigenvalue: f64,
    pub riccati_excess: f64,
    pub second_max_gap: f64,
    pub psi_scalar_defect: f64,
    pub second_transversality_excess: f64,
    /// Scalar accumulator `Ψ` along the grid (after normalisation).
    pub psi_scalar: Vec<f64>,
    pub loewner_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpResiduals {
    pub jump_residuals: Vec<f64>,
    pub switching_transversality_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticResiduals {
    /// Ensemble-averaged maximum-condition gap per grid time.
    pub gap_series: Vec<f64>,
    pub expected_max_gap: f64,
    pub jump_residuals: Vec<f64>,
    pub terminal_psi_residual: f64,
    pub terminal_psi_matrix_residual: f64,
}

/// Residuals of one certificate check; every field is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub adjoint_residual: f64,
    pub max_gap: f64,
    pub max_gap_time: f64,
    pub transversality_excess: f64,
    pub nontriviality_slack: f64,
    /// Worst mismatch between the reference velocity and the convexified
    /// drift; a property of the reference, not part of the violation.
    pub admissibility_defect: f64,
    pub second_order: Option<SecondOrderResiduals>,
    pub jumps: Option<JumpResiduals>,
    pub stochastic: Option<StochasticResiduals>,
    pub violation: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl CertificateReport {
    pub fn new(tolerance: f64) -> Self {
        Self {
            adjoint_residual: 0.0,
            max_gap: 0.0,
            max_gap_time: 0.0,
            transversality_excess: 0.0,
            nontriviality_slack: 0.0,
            admissibility_defect: 0.0,
            second_order: None,
            jumps: None,
            stochastic: None,
            violation: 0.0,
            tolerance,
            verdict: Verdict::Reject,
        }
    }

    /// Recomputes `violation` (max of all residuals) and the verdict.
    pub fn finalize(&mut self) {
        let mut v = self
            .adjoint_residual
            .max(self.max_gap)
            .max(self.transversality_excess)
            .max(self.nontriviality_slack);
        let mut riccati_ok = true;
        if let Some(s) = &self.second_order {
            v = v.max(s.second_max_gap).max(s.psi_scalar_defect).max(s.second_transversality_excess);
            riccati_ok = s.riccati_excess <= s.loewner_tol;
        }
        if let Some(j) = &self.jumps {
            v = j.jump_residuals.iter().fold(v, |a, &b| a.max(b)).max(j.switching_transversality_excess);
        }
        if let Some(s) = &self.stochastic {
            v = s
                .jump_residuals
                .iter()
                .fold(v, |a, &b| a.max(b))
                .max(s.expected_max_gap)
                .max(s.terminal_psi_residual)
                .max(s.terminal_psi_matrix_residual);
        }
        let accept = v <= self.tolerance && riccati_ok;
        if let Some(s) = &self.second_order {
            v = v.max(s.riccati_excess);
        }
        self.violation = v;
        self.verdict = if accept { Verdict::Accept } else { Verdict::Reject };
    }

    /// `(name, value)` pairs of every residual present, for reporting.
    pub fn residuals(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("adjoint_residual", self.adjoint_residual),
            ("max_gap", self.max_gap),
            ("max_gap_time", self.max_gap_time),
            ("transversality_excess", self.transversality_excess),
            ("nontriviality_slack", self.nontriviality_slack),
            ("admissibility_defect", self.admissibility_defect),
        ];
        if let Some(s) = &self.second_order {
            out.extend([
                ("riccati_sup_eigenvalue", s.riccati_sup_eigenvalue),
                ("riccati_excess", s.riccati_excess),
                ("second_max_gap", s.second_max_gap),
                ("psi_scalar_defect", s.psi_scalar_defect),
                ("second_transversality_excess", s.second_transversality_excess),
            ]);
        }
        if let Some(j) = &self.jumps {
            out.push(("max_jump_residual", j.jump_residuals.iter().fold(0.0, |a, &b| a.max(b))));
            out.push(("switching_transversality_excess", j.switching_transversality_excess));
        }
        if let Some(s) = &self.stochastic {
            out.extend([
                ("expected_max_gap", s.expected_max_gap),
                ("max_jump_residual", s.jump_residuals.iter().fold(0.0, |a, &b| a.max(b))),
                ("terminal_psi_residual", s.terminal_psi_residual),
                ("terminal_psi_matrix_residual", s.terminal_psi_matrix_residual),
            ]);
        }
        out.push(("violation", self.violation));
        out.push(("tolerance", self.tolerance));
        out
    }
}
