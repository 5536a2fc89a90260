//! JSON encoding of complex matrices: row-major nested arrays whose entries
//! are `[re, im]` pairs.

use serde::Serializer;
use serde_json::{json, Value};

use crate::blockcp::BlockCpMap;
use crate::cpmap::CpMap;
use crate::error::{Error, Result};
use crate::lindblad::{build_generator, BlockGenerator};
use crate::numerics::{c, CMatrix};

pub const CONVENTION: &str = "heisenberg-kraus";

pub fn matrix_to_value(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

pub fn matrices_to_value(ms: &[CMatrix]) -> Value {
    Value::Array(ms.iter().map(matrix_to_value).collect())
}

fn entry(v: &Value) -> Result<crate::numerics::C64> {
    match v {
        Value::Array(pair) if pair.len() == 2 => {
            let re = pair[0].as_f64().ok_or_else(|| Error::Invalid("real part is not a number".into()))?;
            let im = pair[1].as_f64().ok_or_else(|| Error::Invalid("imaginary part is not a number".into()))?;
            Ok(c(re, im))
        }
        Value::Number(x) => Ok(c(x.as_f64().unwrap_or(f64::NAN), 0.0)),
        _ => Err(Error::Invalid("matrix entry must be [re, im] or a number".into())),
    }
}

pub fn matrix_from_value(v: &Value) -> Result<CMatrix> {
    let rows = v.as_array().ok_or_else(|| Error::Invalid("matrix must be an array of rows".into()))?;
    if rows.is_empty() {
        return Ok(CMatrix::zeros(0, 0));
    }
    let parsed: Vec<Vec<crate::numerics::C64>> = rows
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| Error::Invalid("matrix row must be an array".into()))?
                .iter()
                .map(entry)
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let cols = parsed[0].len();
    if parsed.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    let m = CMatrix::from_fn(parsed.len(), cols, |i, j| parsed[i][j]);
    if !crate::numerics::is_finite(&m) {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    Ok(m)
}

pub fn matrices_from_value(v: &Value) -> Result<Vec<CMatrix>> {
    v.as_array()
        .ok_or_else(|| Error::Invalid("expected an array of matrices".into()))?
        .iter()
        .map(matrix_from_value)
        .collect()
}

pub fn serialize_matrix<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&matrix_to_value(m), s)
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::Invalid(format!("missing field `{key}`")))
}

fn count(v: &Value, key: &str) -> Result<usize> {
    field(v, key)?
        .as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::Invalid(format!("field `{key}` must be a nonnegative integer")))
}

/// `{"n", "d", "convention": "heisenberg-kraus", "kraus", "choi"}`.
pub fn cpmap_to_value(phi: &CpMap) -> Value {
    json!({
        "n": phi.in_dim(),
        "d": phi.out_dim(),
        "convention": CONVENTION,
        "kraus": matrices_to_value(phi.kraus()),
        "choi": matrix_to_value(phi.choi()),
    })
}

/// Reads a CP map record. A present `choi` field takes precedence over
/// `kraus` and is checked for positivity with `tol`.
pub fn cpmap_from_value(v: &Value, tol: f64) -> Result<CpMap> {
    if let Some(conv) = v.get("convention") {
        if conv.as_str() != Some(CONVENTION) {
            return Err(Error::Invalid(format!("unsupported convention {conv}")));
        }
    }
    let n = count(v, "n")?;
    let d = count(v, "d")?;
    if let Some(choi) = v.get("choi") {
        let choi = matrix_from_value(choi)?;
        if choi.shape() != (n * d, n * d) {
            return Err(Error::ShapeMismatch(format!("Choi matrix must be {0}x{0}", n * d)));
        }
        return CpMap::from_choi(n, d, &choi, tol);
    }
    let kraus = matrices_from_value(field(v, "kraus")?)?;
    if kraus.is_empty() {
        return Ok(CpMap::zero(n, d));
    }
    if kraus.iter().any(|k| k.shape() != (n, d)) {
        return Err(Error::ShapeMismatch(format!("Kraus operators must be {n}x{d}")));
    }
    CpMap::from_kraus(&kraus)
}

/// `{"d", "beta1", "beta2", "zetas": [{"Z1", "Z2"}]}`.
pub fn generator_to_value(g: &BlockGenerator) -> Value {
    json!({
        "d": g.inner_dim(),
        "beta1": matrix_to_value(g.beta1()),
        "beta2": matrix_to_value(g.beta2()),
        "zetas": g.zetas().iter().map(|(a, b)| json!({"Z1": matrix_to_value(a), "Z2": matrix_to_value(b)})).collect::<Vec<_>>(),
    })
}

pub fn generator_from_value(v: &Value) -> Result<BlockGenerator> {
    let d = count(v, "d")?;
    let beta1 = matrix_from_value(field(v, "beta1")?)?;
    let beta2 = matrix_from_value(field(v, "beta2")?)?;
    if beta1.nrows() != d {
        return Err(Error::ShapeMismatch(format!("beta1 must be {d}x{d}")));
    }
    let zetas = field(v, "zetas")?
        .as_array()
        .ok_or_else(|| Error::Invalid("`zetas` must be an array".into()))?
        .iter()
        .map(|z| Ok((matrix_from_value(field(z, "Z1")?)?, matrix_from_value(field(z, "Z2")?)?)))
        .collect::<Result<Vec<_>>>()?;
    build_generator(beta1, beta2, zetas)
}

/// `{"n", "d", "full", "phi1", "phi2", "psi_on_matrix_units"}`.
pub fn block_to_value(b: &BlockCpMap) -> Value {
    json!({
        "n": b.inner_in(),
        "d": b.inner_out(),
        "full": cpmap_to_value(b.full()),
        "phi1": cpmap_to_value(b.phi1()),
        "phi2": cpmap_to_value(b.phi2()),
        "psi_on_matrix_units": matrices_to_value(&b.psi().values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{ginibre, seeded};

    #[test]
    fn round_trip() {
        let m = ginibre(&mut seeded(4), 3, 2);
        let back = matrix_from_value(&matrix_to_value(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_ragged_and_non_numeric() {
        assert!(matrix_from_value(&json!([[[1.0, 0.0]], [[1.0, 0.0], [2.0, 0.0]]])).is_err());
        assert!(matrix_from_value(&json!([["x"]])).is_err());
    }

    #[test]
    fn records_round_trip() {
        let mut rng = seeded(9);
        let phi = CpMap::from_kraus(&crate::random::random_kraus(&mut rng, 2, 3, 2)).unwrap();
        let back = cpmap_from_value(&cpmap_to_value(&phi), 1e-9).unwrap();
        assert!(back.to_linear().distance(&phi.to_linear()) < 1e-12);
        let g = crate::lindblad::random_generator(&mut rng, 2, 2, true);
        assert_eq!(generator_from_value(&generator_to_value(&g)).unwrap(), g);
        let bad = json!({"n": 1, "d": 1, "choi": [[[-1.0, 0.0]]]});
        assert!(matches!(cpmap_from_value(&bad, 1e-9), Err(Error::NotCp { .. })));
    }
}
