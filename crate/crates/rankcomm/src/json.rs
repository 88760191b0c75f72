//! JSON encoding of the public types and decoding of the three file formats
//! the CLI reads back (matrices, operators, symmetric multimaps).
//!
//! Scalars serialize as strings ("3", "1/2"); the enclosing object carries
//! the field, which is why decoding is two-phase and context-aware. Object
//! keys come out sorted (serde_json's default map), so payloads are
//! byte-stable for identical inputs.

use serde_json::{json, Map, Value};

use crate::commutant::{
    CommutantReport, DerivationEntry, MatrixSelector, ReplayOutcome, Verdict,
};
use crate::completion::{Completion, CompletionVerdict, SupportPattern};
use crate::error::Error;
use crate::field::{FieldSpec, GuardVerdict, Scalar};
use crate::linmap::{DecomposeOutcome, MatLinMap, StandardForm};
use crate::matrix::Mat;
use crate::multitrace::{
    SymMultiMap, TraceDecomposeOutcome, TraceDecomposition, TraceDerivationEntry,
    TraceReplayOutcome,
};
use crate::Mode;

pub trait ToJson {
    fn to_json(&self) -> Value;
}

impl ToJson for FieldSpec {
    fn to_json(&self) -> Value {
        match self.modulus() {
            Some(p) => json!({"kind": "prime", "p": p}),
            None => json!({"kind": "rationals"}),
        }
    }
}

pub fn field_from_json(v: &Value) -> Result<FieldSpec, Error> {
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Parse("field object needs a \"kind\"".into()))?;
    match kind {
        "prime" => {
            let p = v
                .get("p")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Parse("prime field needs \"p\"".into()))?;
            FieldSpec::prime(p)
        }
        "rationals" => Ok(FieldSpec::rationals()),
        other => Err(Error::Parse(format!("unknown field kind {other:?}"))),
    }
}

impl ToJson for Scalar {
    fn to_json(&self) -> Value {
        Value::String(self.to_string())
    }
}

impl ToJson for Mat {
    fn to_json(&self) -> Value {
        let n = self.n();
        let rows: Vec<Value> = (1..=n)
            .map(|i| {
                Value::Array(
                    (1..=n)
                        .map(|j| Value::String(self.get(i, j).to_string()))
                        .collect(),
                )
            })
            .collect();
        json!({"n": n, "field": self.spec().to_json(), "rows": rows})
    }
}

pub fn mat_from_json(v: &Value) -> Result<Mat, Error> {
    let n = v
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Parse("matrix object needs \"n\"".into()))? as usize;
    let field = field_from_json(
        v.get("field")
            .ok_or_else(|| Error::Parse("matrix object needs \"field\"".into()))?,
    )?;
    let rows_v = v
        .get("rows")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("matrix object needs \"rows\"".into()))?;
    if rows_v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected {n} rows, got {}",
            rows_v.len()
        )));
    }
    let mut rows = Vec::with_capacity(n);
    for row_v in rows_v {
        let cells = row_v
            .as_array()
            .ok_or_else(|| Error::Parse("matrix rows must be arrays".into()))?;
        let mut row = Vec::with_capacity(n);
        for cell in cells {
            let s = cell
                .as_str()
                .ok_or_else(|| Error::Parse("matrix entries must be strings".into()))?;
            row.push(Scalar::parse(s, &field)?);
        }
        rows.push(row);
    }
    Mat::from_rows(rows, &field)
}

fn unit_key(i: usize, j: usize, n: usize) -> String {
    if n <= 9 {
        format!("e{i}{j}")
    } else {
        format!("e{i}_{j}")
    }
}

fn parse_unit_key(key: &str, n: usize) -> Result<(usize, usize), Error> {
    let bad = || Error::Parse(format!("bad unit key {key:?}"));
    let body = key.strip_prefix('e').ok_or_else(bad)?;
    let (i, j) = if let Some((a, b)) = body.split_once('_') {
        (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)
    } else if body.len() == 2 {
        let mut chars = body.chars();
        let a = chars.next().unwrap().to_digit(10).ok_or_else(bad)? as usize;
        let b = chars.next().unwrap().to_digit(10).ok_or_else(bad)? as usize;
        (a, b)
    } else {
        return Err(bad());
    };
    if i < 1 || i > n || j < 1 || j > n {
        return Err(Error::IndexOutOfRange { i, j, n });
    }
    Ok((i, j))
}

impl ToJson for MatLinMap {
    fn to_json(&self) -> Value {
        let n = self.n();
        let mut columns = Map::new();
        for b in 0..n * n {
            let (i, j) = (b / n + 1, b % n + 1);
            let img = self.column(b);
            let flat: Vec<Value> = img
                .vec_entries()
                .iter()
                .map(|s| Value::String(s.to_string()))
                .collect();
            columns.insert(unit_key(i, j, n), Value::Array(flat));
        }
        json!({"n": n, "field": self.spec().to_json(), "columns": Value::Object(columns)})
    }
}

pub fn linmap_from_json(v: &Value) -> Result<MatLinMap, Error> {
    let n = v
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Parse("operator object needs \"n\"".into()))? as usize;
    let field = field_from_json(
        v.get("field")
            .ok_or_else(|| Error::Parse("operator object needs \"field\"".into()))?,
    )?;
    let columns = v
        .get("columns")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Parse("operator object needs \"columns\"".into()))?;
    let mut cols = vec![Mat::zero(n, &field); n * n];
    for (key, flat_v) in columns {
        let (i, j) = parse_unit_key(key, n)?;
        let flat = flat_v
            .as_array()
            .ok_or_else(|| Error::Parse("operator columns must be arrays".into()))?;
        if flat.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "column {key} has {} entries, expected {}",
                flat.len(),
                n * n
            )));
        }
        let mut entries = Vec::with_capacity(n * n);
        for cell in flat {
            let s = cell
                .as_str()
                .ok_or_else(|| Error::Parse("operator entries must be strings".into()))?;
            entries.push(Scalar::parse(s, &field)?);
        }
        cols[(i - 1) * n + (j - 1)] = Mat::from_entries(n, &field, entries)?;
    }
    MatLinMap::from_columns(cols)
}

impl ToJson for SymMultiMap {
    fn to_json(&self) -> Value {
        let coeffs: Vec<Value> = self
            .coeffs()
            .iter()
            .map(|(tuple, value)| {
                let t1: Vec<u64> = tuple.iter().map(|&b| b as u64 + 1).collect();
                json!({"tuple": t1, "value": value.to_json()})
            })
            .collect();
        json!({
            "m": self.m(),
            "n": self.n(),
            "field": self.spec().to_json(),
            "coeffs": coeffs,
        })
    }
}

pub fn symmap_from_json(v: &Value) -> Result<SymMultiMap, Error> {
    let m = v
        .get("m")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Parse("multimap object needs \"m\"".into()))? as u32;
    let n = v
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Parse("multimap object needs \"n\"".into()))? as usize;
    let field = field_from_json(
        v.get("field")
            .ok_or_else(|| Error::Parse("multimap object needs \"field\"".into()))?,
    )?;
    let coeffs_v = v
        .get("coeffs")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("multimap object needs \"coeffs\"".into()))?;
    let mut coeffs = std::collections::BTreeMap::new();
    for entry in coeffs_v {
        let tuple_v = entry
            .get("tuple")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("coefficient needs \"tuple\"".into()))?;
        let mut tuple = Vec::with_capacity(tuple_v.len());
        for t in tuple_v {
            let b = t
                .as_u64()
                .ok_or_else(|| Error::Parse("tuple entries are 1-based integers".into()))?;
            if b < 1 || b > (n * n) as u64 {
                return Err(Error::Parse(format!("tuple index {b} outside 1..={}", n * n)));
            }
            tuple.push((b - 1) as u16);
        }
        let value = mat_from_json(
            entry
                .get("value")
                .ok_or_else(|| Error::Parse("coefficient needs \"value\"".into()))?,
        )?;
        if *value.spec() != field {
            return Err(Error::MixedFields);
        }
        coeffs.insert(tuple, value);
    }
    SymMultiMap::from_sorted_coeffs(m, n, &field, coeffs)
}

impl ToJson for Mode {
    fn to_json(&self) -> Value {
        match self {
            Mode::Exhaustive => Value::String("exhaustive".into()),
            Mode::Random { samples, seed } => json!({"random": {"samples": samples, "seed": seed}}),
        }
    }
}

impl ToJson for MatrixSelector {
    fn to_json(&self) -> Value {
        Value::String(self.as_str())
    }
}

impl ToJson for SupportPattern {
    fn to_json(&self) -> Value {
        let positions: Vec<Value> = self
            .positions()
            .iter()
            .map(|&(i, j)| json!([i, j]))
            .collect();
        json!({"n": self.n(), "positions": positions})
    }
}

impl ToJson for Completion {
    fn to_json(&self) -> Value {
        json!({
            "pattern": self.pattern.to_json(),
            "b": self.b.to_json(),
            "support": self.support().iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
            "k": self.k,
            "method": self.method.as_str(),
            "certificate": {
                "field": self.certificate.field.to_json(),
                "mode": self.certificate.mode.to_json(),
                "checks": self.certificate.checks,
            },
        })
    }
}

impl ToJson for CompletionVerdict {
    fn to_json(&self) -> Value {
        match self {
            CompletionVerdict::Pass { checks } => json!({"verdict": "pass", "checks": checks}),
            CompletionVerdict::Fail { fills, t, rank, matrix, checks } => json!({
                "verdict": "fail",
                "fills": fills.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                "t": t.to_string(),
                "rank": rank,
                "matrix": matrix.to_json(),
                "checks": checks,
            }),
        }
    }
}

impl ToJson for Verdict {
    fn to_json(&self) -> Value {
        match self {
            Verdict::Pass { checked } => json!({"verdict": "pass", "checked": checked}),
            Verdict::Fail { witness, commutator, checked } => json!({
                "verdict": "fail",
                "witness": witness.to_json(),
                "commutator": commutator.to_json(),
                "checked": checked,
            }),
        }
    }
}

impl ToJson for StandardForm {
    fn to_json(&self) -> Value {
        json!({
            "lambda": self.lambda.to_string(),
            "mu": self.mu.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        })
    }
}

impl ToJson for DecomposeOutcome {
    fn to_json(&self) -> Value {
        match self {
            DecomposeOutcome::Standard(sf) => json!({"standard": sf.to_json()}),
            DecomposeOutcome::NotStandard { unit, residual } => json!({
                "not_standard": {"unit": [unit.0, unit.1], "residual": residual.to_json()}
            }),
        }
    }
}

impl ToJson for GuardVerdict {
    fn to_json(&self) -> Value {
        json!({"pass": self.pass, "reason": self.reason})
    }
}

impl ToJson for CommutantReport {
    fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "selector": self.selector.to_json(),
            "field": self.field.to_json(),
            "mode": self.mode.to_json(),
            "set_size": self.set_size.to_string(),
            "constraint_count": self.constraint_count,
            "dimension": self.dimension,
            "standard_dim": self.standard_dim,
            "excess": self.excess,
            "predicted": self.predicted.map(Value::from).unwrap_or(Value::Null),
            "note": self.note.clone().map(Value::from).unwrap_or(Value::Null),
            "basis": self.basis.iter().map(ToJson::to_json).collect::<Vec<_>>(),
        })
    }
}

impl ToJson for DerivationEntry {
    fn to_json(&self) -> Value {
        json!({
            "pattern": self.pattern.iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
            "b_support": self.b_support.iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
            "method": self.method,
            "t_values": self.t_values,
            "all_zero": self.all_zero,
        })
    }
}

impl ToJson for ReplayOutcome {
    fn to_json(&self) -> Value {
        match self {
            ReplayOutcome::Standard { form, log } => json!({
                "outcome": "standard",
                "form": form.to_json(),
                "log": log.iter().map(ToJson::to_json).collect::<Vec<_>>(),
            }),
            ReplayOutcome::Violation { witness, commutator, context, log } => json!({
                "outcome": "violation",
                "witness": witness.to_json(),
                "commutator": commutator.to_json(),
                "context": context,
                "log": log.iter().map(ToJson::to_json).collect::<Vec<_>>(),
            }),
        }
    }
}

impl ToJson for TraceDerivationEntry {
    fn to_json(&self) -> Value {
        json!({
            "pattern": self.pattern.iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
            "b_support": self.b_support.iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
            "method": self.method,
            "fills_checked": self.fills_checked,
        })
    }
}

impl ToJson for TraceReplayOutcome {
    fn to_json(&self) -> Value {
        match self {
            TraceReplayOutcome::CommutingEverywhere { extractions, log } => json!({
                "outcome": "commuting_everywhere",
                "extractions": extractions,
                "log": log.iter().map(ToJson::to_json).collect::<Vec<_>>(),
            }),
            TraceReplayOutcome::Violation { witness, commutator, pattern, fills, log } => json!({
                "outcome": "violation",
                "witness": witness.to_json(),
                "commutator": commutator.to_json(),
                "pattern": pattern.iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
                "fills": fills.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                "log": log.iter().map(ToJson::to_json).collect::<Vec<_>>(),
            }),
        }
    }
}

impl ToJson for TraceDecomposition {
    fn to_json(&self) -> Value {
        let mus: Vec<Value> = (1..=self.m as usize)
            .map(|i| {
                let coeffs: Vec<Value> = self.mus[i - 1]
                    .iter()
                    .map(|(tuple, c)| {
                        let t1: Vec<u64> = tuple.iter().map(|&b| b as u64 + 1).collect();
                        json!({"tuple": t1, "value": c.to_string()})
                    })
                    .collect();
                json!({"i": i, "coeffs": coeffs})
            })
            .collect();
        json!({
            "m": self.m,
            "n": self.n,
            "field": self.spec.to_json(),
            "mu0": self.mu0.to_string(),
            "mus": mus,
        })
    }
}

impl ToJson for TraceDecomposeOutcome {
    fn to_json(&self) -> Value {
        match self {
            TraceDecomposeOutcome::Decomposed(dec) => json!({"decomposed": dec.to_json()}),
            TraceDecomposeOutcome::NotDecomposable { tuple, position } => json!({
                "not_decomposable": {
                    "tuple": tuple.iter().map(|&b| b as u64 + 1).collect::<Vec<_>>(),
                    "position": [position.0, position.1],
                }
            }),
        }
    }
}

impl ToJson for Error {
    fn to_json(&self) -> Value {
        json!({"error": self.to_string(), "exit_code": self.exit_code()})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::random_rank_k;

    fn gf(p: u64) -> FieldSpec {
        FieldSpec::prime(p).unwrap()
    }

    #[test]
    fn field_roundtrip() {
        for f in [gf(5), FieldSpec::rationals()] {
            assert_eq!(field_from_json(&f.to_json()).unwrap(), f);
        }
        assert_eq!(gf(5).to_json().to_string(), r#"{"kind":"prime","p":5}"#);
    }

    #[test]
    fn mat_roundtrip() {
        let f = gf(7);
        let m = random_rank_k(3, 2, &f, 11);
        assert_eq!(mat_from_json(&m.to_json()).unwrap(), m);
        let q = FieldSpec::rationals();
        let mut mq = Mat::zero(2, &q);
        mq.set(1, 2, Scalar::parse("-3/4", &q).unwrap());
        assert_eq!(mat_from_json(&mq.to_json()).unwrap(), mq);
    }

    #[test]
    fn linmap_roundtrip() {
        let f = gf(5);
        let g = MatLinMap::random_map(3, &f, 2).unwrap();
        assert_eq!(linmap_from_json(&g.to_json()).unwrap(), g);
        let e = MatLinMap::example_map(4, &f).unwrap();
        assert_eq!(linmap_from_json(&e.to_json()).unwrap(), e);
    }

    #[test]
    fn symmap_roundtrip() {
        let f = gf(11);
        let g = SymMultiMap::random(2, 3, &f, 4).unwrap();
        assert_eq!(symmap_from_json(&g.to_json()).unwrap(), g);
        let g3 = SymMultiMap::random(3, 3, &f, 4).unwrap();
        assert_eq!(symmap_from_json(&g3.to_json()).unwrap(), g3);
    }

    #[test]
    fn malformed_inputs_are_parse_errors() {
        assert!(field_from_json(&json!({"kind": "septic"})).is_err());
        assert!(mat_from_json(&json!({"n": 2})).is_err());
        assert!(mat_from_json(&json!({
            "n": 2, "field": {"kind": "prime", "p": 5}, "rows": [["1", "0"]]
        }))
        .is_err());
        assert!(linmap_from_json(&json!({
            "n": 2, "field": {"kind": "prime", "p": 5}, "columns": {"e99": []}
        }))
        .is_err());
    }

    #[test]
    fn serialization_is_deterministic() {
        let f = gf(5);
        let g = MatLinMap::example_map(3, &f).unwrap();
        assert_eq!(g.to_json().to_string(), g.to_json().to_string());
    }
}
