//! JSON codecs for coefficient matrices, step functions and toy-Fock settings.
//!
//! Complex numbers are `[re, im]` pairs; matrices are arrays of rows; dyadic
//! times are strings such as `"3/2^4"`, `"3/16"` or `"1"` (integers may also
//! be given as JSON numbers). Decoding collects every schema violation with
//! its JSON pointer before giving up.

use std::fmt;

use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::coefficients::CoefficientMatrix;
use crate::error::Error;
use crate::numkit::CMatrix;
use crate::signals::{Dyadic, StepFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JsonError {
    #[error("schema violation{}: {}", if .0.len() == 1 { "" } else { "s" }, join(.0))]
    Schema(Vec<Violation>),
    #[error("{pointer}: {error}")]
    Invalid { pointer: String, error: Error },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// `pointer + "/" + token`, escaped.
pub fn child(pointer: &str, token: impl fmt::Display) -> String {
    format!("{pointer}/{}", token.to_string().replace('~', "~0").replace('/', "~1"))
}

/// Accumulates violations while decoding.
#[derive(Debug, Default)]
pub struct Decoder {
    pub violations: Vec<Violation>,
    pub invalid: Option<(String, Error)>,
}

impl Decoder {
    pub fn new() -> Decoder {
        Decoder::default()
    }

    pub fn violate(&mut self, pointer: &str, message: impl Into<String>) {
        self.violations.push(Violation { pointer: pointer.to_string(), message: message.into() });
    }

    /// Records the first semantic failure (dimension or validation).
    pub fn reject(&mut self, pointer: &str, error: Error) {
        if self.invalid.is_none() {
            self.invalid = Some((pointer.to_string(), error));
        }
    }

    pub fn finish<T>(self, value: Option<T>) -> Result<T, JsonError> {
        if !self.violations.is_empty() {
            return Err(JsonError::Schema(self.violations));
        }
        if let Some((pointer, error)) = self.invalid {
            return Err(JsonError::Invalid { pointer, error });
        }
        Ok(value.expect("a decoder without violations yields a value"))
    }

    pub fn object<'a>(&mut self, v: &'a Value, pointer: &str) -> Option<&'a Map<String, Value>> {
        let o = v.as_object();
        if o.is_none() {
            self.violate(pointer, format!("expected an object, got {}", kind(v)));
        }
        o
    }

    /// Flags keys outside `allowed`.
    pub fn only_keys(&mut self, o: &Map<String, Value>, pointer: &str, allowed: &[&str]) {
        for k in o.keys().filter(|k| !allowed.contains(&k.as_str())) {
            self.violate(&child(pointer, k), format!("unknown property '{k}'"));
        }
    }

    pub fn required<'a>(&mut self, o: &'a Map<String, Value>, pointer: &str, key: &str) -> Option<&'a Value> {
        let v = o.get(key);
        if v.is_none() {
            self.violate(pointer, format!("missing required property '{key}'"));
        }
        v
    }

    pub fn uint(&mut self, v: &Value, pointer: &str) -> Option<usize> {
        match v.as_u64() {
            Some(n) => Some(n as usize),
            None => {
                self.violate(pointer, format!("expected a nonnegative integer, got {}", kind(v)));
                None
            }
        }
    }

    pub fn number(&mut self, v: &Value, pointer: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.violate(pointer, format!("expected a finite number, got {}", kind(v)));
                None
            }
        }
    }

    pub fn boolean(&mut self, v: &Value, pointer: &str) -> Option<bool> {
        let b = v.as_bool();
        if b.is_none() {
            self.violate(pointer, format!("expected a boolean, got {}", kind(v)));
        }
        b
    }

    pub fn string<'a>(&mut self, v: &'a Value, pointer: &str) -> Option<&'a str> {
        let s = v.as_str();
        if s.is_none() {
            self.violate(pointer, format!("expected a string, got {}", kind(v)));
        }
        s
    }

    pub fn array<'a>(&mut self, v: &'a Value, pointer: &str) -> Option<&'a Vec<Value>> {
        let a = v.as_array();
        if a.is_none() {
            self.violate(pointer, format!("expected an array, got {}", kind(v)));
        }
        a
    }

    pub fn complex(&mut self, v: &Value, pointer: &str) -> Option<Complex64> {
        match v.as_array().map(|a| a.as_slice()) {
            Some([re, im]) => match (re.as_f64(), im.as_f64()) {
                (Some(re), Some(im)) if re.is_finite() && im.is_finite() => Some(Complex64::new(re, im)),
                _ => {
                    self.violate(pointer, "expected [re, im] with finite numbers");
                    None
                }
            },
            _ => {
                self.violate(pointer, format!("expected a complex number [re, im], got {}", kind(v)));
                None
            }
        }
    }

    pub fn vector(&mut self, v: &Value, pointer: &str) -> Option<Vec<Complex64>> {
        let a = self.array(v, pointer)?;
        let out: Vec<Option<Complex64>> = a.iter().enumerate().map(|(i, x)| self.complex(x, &child(pointer, i))).collect();
        out.into_iter().collect()
    }

    pub fn matrix(&mut self, v: &Value, pointer: &str) -> Option<CMatrix> {
        let rows = self.array(v, pointer)?;
        if rows.is_empty() {
            self.violate(pointer, "a matrix needs at least one row");
            return None;
        }
        let parsed: Vec<Option<Vec<Complex64>>> = rows.iter().enumerate().map(|(i, r)| self.vector(r, &child(pointer, i))).collect();
        let parsed: Vec<Vec<Complex64>> = parsed.into_iter().collect::<Option<_>>()?;
        let cols = parsed[0].len();
        if cols == 0 {
            self.violate(&child(pointer, 0), "a matrix row needs at least one entry");
            return None;
        }
        if let Some(i) = parsed.iter().position(|r| r.len() != cols) {
            self.violate(&child(pointer, i), format!("row has {} entries, expected {cols}", parsed[i].len()));
            return None;
        }
        let n = parsed.len();
        CMatrix::from_row_major(n, cols, parsed.into_iter().flatten().collect()).ok()
    }

    pub fn dyadic(&mut self, v: &Value, pointer: &str) -> Option<Dyadic> {
        let parsed = match v {
            Value::String(s) => s.parse::<Dyadic>().map_err(|e| e.to_string()),
            Value::Number(n) => match n.as_f64() {
                Some(x) => Dyadic::from_f64(x).map_err(|e| e.to_string()),
                None => Err("not a finite number".into()),
            },
            other => Err(format!("expected a dyadic time such as \"3/2^4\", got {}", kind(other))),
        };
        match parsed {
            Ok(d) if !d.is_negative() => Some(d),
            Ok(d) => {
                self.violate(pointer, format!("time {d} is negative"));
                None
            }
            Err(m) => {
                self.violate(pointer, m);
                None
            }
        }
    }

    pub fn step_function(&mut self, v: &Value, pointer: &str) -> Option<StepFunction> {
        let o = self.object(v, pointer)?;
        self.only_keys(o, pointer, &["dim_k", "pieces"]);
        let dim_k = self.required(o, pointer, "dim_k").and_then(|x| self.uint(x, &child(pointer, "dim_k")));
        let pptr = child(pointer, "pieces");
        let pieces = self.required(o, pointer, "pieces").and_then(|x| self.array(x, &pptr));
        let (dim_k, pieces) = (dim_k?, pieces?);
        if pieces.is_empty() {
            self.violate(&pptr, "a step function needs at least one piece");
            return None;
        }
        let mut out = Vec::with_capacity(pieces.len());
        let mut ok = true;
        for (i, p) in pieces.iter().enumerate() {
            let ptr = child(&pptr, i);
            let Some(po) = self.object(p, &ptr) else {
                ok = false;
                continue;
            };
            self.only_keys(po, &ptr, &["until", "value"]);
            let until = match self.required(po, &ptr, "until") {
                Some(Value::Null) => Some(None),
                Some(x) => self.dyadic(x, &child(&ptr, "until")).map(Some),
                None => None,
            };
            let vptr = child(&ptr, "value");
            let value = self.required(po, &ptr, "value").and_then(|x| self.vector(x, &vptr));
            if let Some(value) = &value {
                if value.len() != dim_k {
                    self.reject(&vptr, Error::Dimension(format!("value has {} entries, expected dim_k = {dim_k}", value.len())));
                }
            }
            match (until, value) {
                (Some(u), Some(val)) => out.push((u, val)),
                _ => ok = false,
            }
        }
        if !ok || self.invalid.is_some() {
            return None;
        }
        match StepFunction::from_pieces(dim_k, out) {
            Ok(f) => Some(f),
            Err(e) => {
                self.violate(&pptr, e.to_string());
                None
            }
        }
    }

    /// Explicit blocks `K, L, M, W`, or a generator built from `H, L, W`
    /// (unitary type) with an optional positive `damping` (contraction type).
    pub fn coefficients(&mut self, v: &Value, pointer: &str) -> Option<CoefficientMatrix> {
        let o = self.object(v, pointer)?;
        let constructed = o.contains_key("H");
        let keys: &[&str] =
            if constructed { &["dim_h", "dim_k", "H", "L", "W", "damping"] } else { &["dim_h", "dim_k", "K", "L", "M", "W"] };
        self.only_keys(o, pointer, keys);
        let dim_h = self.required(o, pointer, "dim_h").and_then(|x| self.uint(x, &child(pointer, "dim_h")));
        let dim_k = self.required(o, pointer, "dim_k").and_then(|x| self.uint(x, &child(pointer, "dim_k")));
        let get = |d: &mut Decoder, key: &str| d.required(o, pointer, key).and_then(|x| d.matrix(x, &child(pointer, key)));
        let blocks: Vec<Option<CMatrix>> = if constructed {
            vec![get(self, "H"), get(self, "L"), get(self, "W")]
        } else {
            vec![get(self, "K"), get(self, "L"), get(self, "M"), get(self, "W")]
        };
        let damping = if constructed {
            o.get("damping").map(|x| self.matrix(x, &child(pointer, "damping")))
        } else {
            None
        };
        let (dim_h, dim_k) = (dim_h?, dim_k?);
        let blocks: Vec<CMatrix> = blocks.into_iter().collect::<Option<_>>()?;
        let damping = match damping {
            Some(None) => return None,
            Some(Some(d)) => Some(d),
            None => None,
        };
        let built = if constructed {
            let (h, l, w) = (&blocks[0], &blocks[1], &blocks[2]);
            let shape = check_shape(h, dim_h, dim_h, "H")
                .and_then(|_| check_shape(l, dim_h * dim_k, dim_h, "L"))
                .and_then(|_| check_shape(w, dim_h * dim_k, dim_h * dim_k, "W"));
            shape.and_then(|_| match &damping {
                Some(d) => CoefficientMatrix::make_contraction_generator(h, l, w, d),
                None => CoefficientMatrix::make_unitary_generator(h, l, w),
            })
        } else {
            let mut it = blocks.into_iter();
            let (k, l, m, w) = (it.next()?, it.next()?, it.next()?, it.next()?);
            CoefficientMatrix::from_blocks(dim_h, dim_k, k, l, m, w)
        };
        match built {
            Ok(f) => Some(f),
            Err(e) => {
                self.reject(pointer, e);
                None
            }
        }
    }
}

fn check_shape(a: &CMatrix, rows: usize, cols: usize, name: &str) -> crate::Result<()> {
    if (a.rows(), a.cols()) != (rows, cols) {
        return Err(Error::Dimension(format!("{name} is {}×{}, expected {rows}×{cols}", a.rows(), a.cols())));
    }
    Ok(())
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

pub fn decode_coefficients(v: &Value) -> Result<CoefficientMatrix, JsonError> {
    let mut d = Decoder::new();
    let f = d.coefficients(v, "");
    d.finish(f)
}

pub fn decode_step_function(v: &Value) -> Result<StepFunction, JsonError> {
    let mut d = Decoder::new();
    let f = d.step_function(v, "");
    d.finish(f)
}

pub fn complex_to_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn vector_to_json(v: &[Complex64]) -> Value {
    Value::Array(v.iter().map(|z| complex_to_json(*z)).collect())
}

pub fn matrix_to_json(a: &CMatrix) -> Value {
    Value::Array((0..a.rows()).map(|r| vector_to_json(&a.entries()[r * a.cols()..(r + 1) * a.cols()])).collect())
}

pub fn coefficients_to_json(f: &CoefficientMatrix) -> Value {
    json!({
        "dim_h": f.dim_h(),
        "dim_k": f.dim_k(),
        "K": matrix_to_json(f.k()),
        "L": matrix_to_json(f.l()),
        "M": matrix_to_json(f.m()),
        "W": matrix_to_json(f.w()),
    })
}

pub fn step_function_to_json(f: &StepFunction) -> Value {
    let pieces: Vec<Value> = f
        .pieces()
        .into_iter()
        .map(|(until, value)| json!({ "until": until.map(|d| d.to_string()), "value": vector_to_json(value) }))
        .collect();
    json!({ "dim_k": f.dim_k(), "pieces": pieces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::testing::{random_hermitian, random_matrix, random_unitary, rng};

    #[test]
    fn round_trips() {
        let mut r = rng(1);
        let h = random_hermitian(&mut r, 2);
        let l = random_matrix(&mut r, 4, 2);
        let w = random_unitary(&mut r, 4);
        let f = CoefficientMatrix::make_unitary_generator(&h, &l, &w).unwrap();
        let back = decode_coefficients(&coefficients_to_json(&f)).unwrap();
        assert_eq!(back.full_matrix(), f.full_matrix());

        let constructed = json!({
            "dim_h": 2, "dim_k": 2,
            "H": matrix_to_json(&h), "L": matrix_to_json(&l), "W": matrix_to_json(&w),
        });
        let g = decode_coefficients(&constructed).unwrap();
        assert_eq!(g.full_matrix(), f.full_matrix());

        let s: StepFunction = decode_step_function(&json!({
            "dim_k": 1,
            "pieces": [{"until": "1/4", "value": [[1.0, 0.0]]}, {"until": "3/2^3", "value": [[0.0, 1.0]]}, {"until": null, "value": [[0, 0]]}]
        }))
        .unwrap();
        assert_eq!(s.breakpoints(), &["1/4".parse().unwrap(), "3/8".parse().unwrap()]);
        assert_eq!(decode_step_function(&step_function_to_json(&s)).unwrap(), s);
    }

    #[test]
    fn violations_carry_pointers() {
        let bad = json!({"dim_h": 1, "dim_k": 1, "K": [[[0, 0]]], "L": [[1.5]], "M": [[[0, 0]]], "W": [[[1, 0]]]});
        match decode_coefficients(&bad) {
            Err(JsonError::Schema(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].pointer, "/L/0/0");
            }
            other => panic!("{other:?}"),
        }
        let many = json!({"dim_h": "1", "K": [], "L": [[[0, 0]], [[0, 0], [1, 1]]], "extra": 1});
        match decode_coefficients(&many) {
            Err(JsonError::Schema(v)) => {
                let ptrs: Vec<&str> = v.iter().map(|x| x.pointer.as_str()).collect();
                assert!(ptrs.contains(&"/extra"));
                assert!(ptrs.contains(&"/dim_h"));
                assert!(ptrs.contains(&"/K"));
                assert!(ptrs.contains(&"/L/1"));
                assert!(v.iter().any(|x| x.message.contains("'dim_k'")));
            }
            other => panic!("{other:?}"),
        }
        let not_dyadic = json!({"dim_k": 1, "pieces": [{"until": "1/3", "value": [[0, 0]]}, {"until": null, "value": [[0, 0]]}]});
        assert!(matches!(decode_step_function(&not_dyadic), Err(JsonError::Schema(v)) if v[0].pointer == "/pieces/0/until"));
    }

    #[test]
    fn semantic_errors_are_distinct() {
        let wrong_shape = json!({"dim_h": 2, "dim_k": 1, "K": [[[0, 0]]], "L": [[[0, 0]]], "M": [[[0, 0]]], "W": [[[1, 0]]]});
        assert!(matches!(
            decode_coefficients(&wrong_shape),
            Err(JsonError::Invalid { error: Error::Dimension(_), .. })
        ));
        let not_unitary = json!({"dim_h": 1, "dim_k": 1, "H": [[[0, 0]]], "L": [[[0, 0]]], "W": [[[2, 0]]]});
        assert!(matches!(
            decode_coefficients(&not_unitary),
            Err(JsonError::Invalid { error: Error::Validation { .. }, .. })
        ));
        let wrong_len = json!({"dim_k": 2, "pieces": [{"until": null, "value": [[0, 0]]}]});
        assert!(matches!(
            decode_step_function(&wrong_len),
            Err(JsonError::Invalid { pointer, error: Error::Dimension(_) }) if pointer == "/pieces/0/value"
        ));
        assert_eq!(child("/a", "b/c~"), "/a/b~1c~0");
    }
}
