//! Structured check results.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "REJECTED-INPUT")]
    Rejected,
    #[serde(rename = "SATURATED")]
    Saturated,
    #[serde(rename = "WARN")]
    Warn,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Rejected => "REJECTED-INPUT",
            Status::Saturated => "SATURATED",
            Status::Warn => "WARN",
        }
    }
}

/// One inequality or identity check. Non-finite numbers serialize as null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub params: Map<String, Value>,
    #[serde(with = "nullable")]
    pub lhs: f64,
    #[serde(with = "nullable")]
    pub rhs: f64,
    #[serde(with = "nullable")]
    pub ln_lhs: f64,
    #[serde(with = "nullable")]
    pub ln_rhs: f64,
    #[serde(with = "nullable")]
    pub margin: f64,
    #[serde(with = "nullable")]
    pub disc_error: f64,
    pub status: Status,
    pub details: Map<String, Value>,
}

mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

fn ln_or_nan(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NAN
    }
}

impl Report {
    pub fn new(check: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            params: Map::new(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            ln_lhs: f64::NAN,
            ln_rhs: f64::NAN,
            margin: f64::NAN,
            disc_error: 0.0,
            status: Status::Pass,
            details: Map::new(),
        }
    }

    /// Upper-bound check lhs ≤ rhs·(1 + allowance). The margin is
    /// rhs − lhs·(1 + disc_error), so a positive margin survives the
    /// discretization estimate.
    pub fn upper_bound(
        check: impl Into<String>,
        lhs: f64,
        rhs: f64,
        disc_error: f64,
        allowance: f64,
    ) -> Self {
        let mut r = Self::new(check);
        r.set_values(lhs, rhs, disc_error);
        r.status = if lhs <= rhs * (1.0 + allowance) {
            Status::Pass
        } else {
            Status::Fail
        };
        r
    }

    pub fn set_values(&mut self, lhs: f64, rhs: f64, disc_error: f64) {
        self.lhs = lhs;
        self.rhs = rhs;
        self.ln_lhs = ln_or_nan(lhs);
        self.ln_rhs = ln_or_nan(rhs);
        self.disc_error = disc_error;
        self.margin = rhs - lhs * (1.0 + disc_error);
    }

    pub fn param(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), v.into());
        self
    }

    pub fn detail(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), v.into());
        self
    }

    pub fn with_status(mut self, s: Status) -> Self {
        self.status = s;
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

/// Float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

/// JSON array of reports in declared order, pretty-printed with a trailing newline.
pub fn to_json(reports: &[Report]) -> String {
    let mut s = serde_json::to_string_pretty(reports).unwrap_or_else(|_| "[]".into());
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_strings() {
        let r = Report::upper_bound("x", 1.0, 2.0, 0.0, 0.0);
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j["status"], "PASS");
        let r = Report::new("y").with_status(Status::Rejected);
        assert_eq!(
            serde_json::to_value(&r).unwrap()["status"],
            "REJECTED-INPUT"
        );
    }

    #[test]
    fn non_finite_round_trip() {
        let mut r = Report::upper_bound("z", f64::INFINITY, 2.0, 0.0, 0.0);
        r.status = Status::Saturated;
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"lhs\":null"));
        let back: Report = serde_json::from_str(&s).unwrap();
        assert!(back.lhs.is_nan());
    }

    #[test]
    fn pass_implies_bound_with_disc() {
        let r = Report::upper_bound("b", 1.04, 1.0, 0.05, 0.05);
        assert!(r.passed());
        assert!(r.lhs <= r.rhs * (1.0 + r.disc_error));
        assert!(Report::upper_bound("b", 1.06, 1.0, 0.05, 0.05).failed());
    }
}
