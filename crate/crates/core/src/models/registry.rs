//! Name-keyed model registry and its JSON form.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use super::{Dims, GainTable, LinearPlant, Model, PlanarModel, PolyPlant, PolynomialModel, TriangularModel};
use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows};
use crate::poly::Polynomial;

/// `example_4_2(c, k1, k2)`: the planar one-parameter plant.
pub fn example_4_2(c: f64, k1: f64, k2: f64) -> Result<PlanarModel> {
    PlanarModel::new(c, k1, k2)
}

/// `example_4_3(k1, k2, k3)`: the triangular two-parameter plant.
pub fn example_4_3(k1: f64, k2: f64, k3: f64) -> Result<TriangularModel> {
    TriangularModel::new(k1, k2, k3)
}

/// `linear(A, B, C_list, gain_table)` with matrices given row-major.
pub fn linear(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    c_list: &[Vec<Vec<f64>>],
    k0: &[Vec<f64>],
    k_theta: &[Vec<Vec<f64>>],
) -> Result<LinearPlant> {
    LinearPlant::new(
        matrix_from_rows(a)?,
        matrix_from_rows(b)?,
        c_list.iter().map(|c| matrix_from_rows(c)).collect::<Result<_>>()?,
        GainTable {
            k0: matrix_from_rows(k0)?,
            per_param: k_theta.iter().map(|k| matrix_from_rows(k)).collect::<Result<_>>()?,
        },
        None,
    )
}

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Planar {
        c: f64,
        k1: f64,
        k2: f64,
    },
    Triangular {
        k1: f64,
        k2: f64,
        k3: f64,
    },
    Linear {
        a: Rows,
        b: Rows,
        c: Vec<Rows>,
        k0: Rows,
        k_theta: Vec<Rows>,
        omega: Option<f64>,
    },
    Polynomial {
        dims: Dims,
        drift: Vec<String>,
        regressor: Vec<String>,
        /// one-based
        rows: Vec<usize>,
        feedback: Vec<String>,
        v: Option<String>,
        q: Option<String>,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Planar { .. } => "example_4_2",
            ModelSpec::Triangular { .. } => "example_4_3",
            ModelSpec::Linear { .. } => "linear",
            ModelSpec::Polynomial { .. } => "polynomial",
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Model>> {
        Ok(match self {
            ModelSpec::Planar { c, k1, k2 } => Arc::new(PlanarModel::new(*c, *k1, *k2)?),
            ModelSpec::Triangular { k1, k2, k3 } => Arc::new(TriangularModel::new(*k1, *k2, *k3)?),
            ModelSpec::Linear { .. } => Arc::new(self.build_linear()?),
            ModelSpec::Polynomial { dims, v, q, .. } => {
                let (Some(v), Some(q)) = (v, q) else {
                    return Err(Error::config(
                        "model.V",
                        "polynomial models need `V` and `Q` to be simulated",
                    ));
                };
                let names = PolyPlant::feedback_names(*dims);
                Arc::new(PolynomialModel::new(
                    self.poly_plant()?,
                    Polynomial::parse_with(v, &names).map_err(|e| Error::config("model.V", e.to_string()))?,
                    Polynomial::parse_with(q, &names).map_err(|e| Error::config("model.Q", e.to_string()))?,
                )?)
            }
        })
    }

    fn build_linear(&self) -> Result<LinearPlant> {
        let ModelSpec::Linear {
            a,
            b,
            c,
            k0,
            k_theta,
            omega,
        } = self
        else {
            return Err(Error::invalid("not a linear model"));
        };
        let m = |path: &str, rows: &Rows| matrix_from_rows(rows).map_err(|e| Error::config(path, e.to_string()));
        LinearPlant::new(
            m("model.A", a)?,
            m("model.B", b)?,
            c.iter()
                .enumerate()
                .map(|(i, ci)| m(&format!("model.C[{i}]"), ci))
                .collect::<Result<_>>()?,
            GainTable {
                k0: m("model.K0", k0)?,
                per_param: k_theta
                    .iter()
                    .enumerate()
                    .map(|(i, ki)| m(&format!("model.K_theta[{i}]"), ki))
                    .collect::<Result<_>>()?,
            },
            *omega,
        )
    }

    /// The polynomial description used by the observability checker.
    pub fn poly_plant(&self) -> Result<PolyPlant> {
        let f = |v: f64| format!("{v:?}");
        match self {
            ModelSpec::Planar { c, k1, k2 } => {
                PlanarModel::new(*c, *k1, *k2)?;
                let s = |v: &[String]| v.to_vec();
                PolyPlant::parse(
                    Dims { n: 2, m: 1, l: 1 },
                    &s(&["x2".into(), "u1".into()]),
                    &[format!("x1 + {}*x2", f(*c))],
                    &[2],
                    &[format!(
                        "-{}*x1 - {}*x2 - z1*(x1 + {}*x2)",
                        f(*k1),
                        f(*k2),
                        f(*c)
                    )],
                )
            }
            ModelSpec::Triangular { k1, k2, k3 } => {
                TriangularModel::new(*k1, *k2, *k3)?;
                PolyPlant::parse(
                    Dims { n: 3, m: 1, l: 2 },
                    &["x2".into(), "x1^2 + x3".into(), "u1".into()],
                    &["x2".into(), "x1^2".into()],
                    &[2, 3],
                    &[format!(
                        "-{}*x1 - {}*x2 - 2*x1*x2 - (z1 + {})*(x1^2 + z1*x2 + x3) - z2*x1^2",
                        f(*k1),
                        f(*k2),
                        f(*k3)
                    )],
                )
            }
            ModelSpec::Linear { .. } => linear_poly_plant(&self.build_linear()?),
            ModelSpec::Polynomial {
                dims,
                drift,
                regressor,
                rows,
                feedback,
                ..
            } => PolyPlant::parse(*dims, drift, regressor, rows, feedback),
        }
    }

    /// Reads the `model` object of a configuration document.
    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::config("model", "must be an object"))?;
        let name = obj
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::config("model.name", "missing model name"))?;
        let num = |k: &str| num_field(obj, k);
        Ok(match name {
            "example_4_2" => ModelSpec::Planar {
                c: num("c")?,
                k1: num("k1")?,
                k2: num("k2")?,
            },
            "example_4_3" => ModelSpec::Triangular {
                k1: num("k1")?,
                k2: num("k2")?,
                k3: num("k3")?,
            },
            "linear" => ModelSpec::Linear {
                a: rows_field(obj, "A")?,
                b: rows_field(obj, "B")?,
                c: rows_list_field(obj, "C")?,
                k0: rows_field(obj, "K0")?,
                k_theta: rows_list_field(obj, "K_theta")?,
                omega: match obj.get("omega") {
                    None | Some(Value::Null) => None,
                    Some(_) => Some(num("omega")?),
                },
            },
            "polynomial" => {
                let int = |k: &str| -> Result<usize> {
                    obj.get(k)
                        .and_then(Value::as_u64)
                        .map(|v| v as usize)
                        .ok_or_else(|| Error::config(format!("model.{k}"), "expected a non-negative integer"))
                };
                let dims = Dims {
                    n: int("n")?,
                    m: int("m")?,
                    l: int("l")?,
                };
                let opt_str = |k: &str| -> Result<Option<String>> {
                    match obj.get(k) {
                        None | Some(Value::Null) => Ok(None),
                        Some(Value::String(s)) => Ok(Some(s.clone())),
                        Some(_) => Err(Error::config(format!("model.{k}"), "expected a string")),
                    }
                };
                ModelSpec::Polynomial {
                    dims,
                    drift: str_list(obj, "drift")?,
                    regressor: str_list(obj, "regressor")?,
                    rows: obj
                        .get("rows")
                        .and_then(Value::as_array)
                        .and_then(|a| a.iter().map(|v| v.as_u64().map(|x| x as usize)).collect())
                        .ok_or_else(|| Error::config("model.rows", "expected a list of one-based equation indices"))?,
                    feedback: str_list(obj, "feedback")?,
                    v: opt_str("V")?,
                    q: opt_str("Q")?,
                }
            }
            other => {
                return Err(Error::config(
                    "model.name",
                    format!("unknown model `{other}` (expected example_4_2, example_4_3, linear or polynomial)"),
                ))
            }
        })
    }

    pub fn to_json(&self) -> Value {
        match self {
            ModelSpec::Planar { c, k1, k2 } => json!({"name": "example_4_2", "c": c, "k1": k1, "k2": k2}),
            ModelSpec::Triangular { k1, k2, k3 } => json!({"name": "example_4_3", "k1": k1, "k2": k2, "k3": k3}),
            ModelSpec::Linear {
                a,
                b,
                c,
                k0,
                k_theta,
                omega,
            } => json!({"name": "linear", "A": a, "B": b, "C": c, "K0": k0, "K_theta": k_theta, "omega": omega}),
            ModelSpec::Polynomial {
                dims,
                drift,
                regressor,
                rows,
                feedback,
                v,
                q,
            } => json!({
                "name": "polynomial", "n": dims.n, "m": dims.m, "l": dims.l,
                "drift": drift, "regressor": regressor, "rows": rows, "feedback": feedback,
                "V": v, "Q": q,
            }),
        }
    }
}

/// Polynomial rendering of a linear plant whose parameter matrices each touch a
/// single equation.
pub(crate) fn linear_poly_plant(plant: &LinearPlant) -> Result<PolyPlant> {
    use crate::models::PlantModel;
    let d = plant.dims();
    let rows = plant.single_row_structure().ok_or_else(|| {
        Error::invalid("linear plant is not in one-parameter-per-equation form; use the rank test instead")
    })?;
    let nv = d.n + d.m;
    let lin = |coefs: Vec<(usize, f64)>, nv: usize| -> Result<Polynomial> {
        Polynomial::from_terms(
            nv,
            coefs.into_iter().map(|(j, c)| {
                let mut e = vec![0; nv];
                e[j] = 1;
                (e, c)
            }),
        )
    };
    let drift = (0..d.n)
        .map(|i| {
            let coefs = (0..d.n)
                .map(|j| (j, plant.a()[(i, j)]))
                .chain((0..d.m).map(|j| (d.n + j, plant.b()[(i, j)])))
                .collect();
            lin(coefs, nv)
        })
        .collect::<Result<Vec<_>>>()?;
    let regressor = plant
        .c()
        .iter()
        .zip(&rows)
        .map(|(ci, &r)| lin((0..d.n).map(|j| (j, ci[(r, j)])).collect(), nv))
        .collect::<Result<Vec<_>>>()?;
    // k(z, x) = (K0 + Σ zᵢ Kᵢ) x over (x, z)
    let kv = d.n + d.l;
    let gains = plant.gains();
    let feedback = (0..d.m)
        .map(|r| {
            let mut terms = Vec::new();
            for j in 0..d.n {
                let mut e = vec![0; kv];
                e[j] = 1;
                terms.push((e, gains.k0[(r, j)]));
                for (i, ki) in gains.per_param.iter().enumerate() {
                    let mut e = vec![0; kv];
                    e[j] = 1;
                    e[d.n + i] = 1;
                    terms.push((e, ki[(r, j)]));
                }
            }
            Polynomial::from_terms(kv, terms)
        })
        .collect::<Result<Vec<_>>>()?;
    PolyPlant::new(d, drift, regressor, rows, feedback)
}

fn num_field(obj: &Map<String, Value>, k: &str) -> Result<f64> {
    obj.get(k)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::config(format!("model.{k}"), "expected a number"))
}

fn rows_of(v: &Value) -> Option<Rows> {
    v.as_array()?
        .iter()
        .map(|row| row.as_array()?.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
        .collect()
}

fn rows_field(obj: &Map<String, Value>, k: &str) -> Result<Rows> {
    obj.get(k)
        .and_then(rows_of)
        .ok_or_else(|| Error::config(format!("model.{k}"), "expected a row-major matrix (list of rows)"))
}

fn rows_list_field(obj: &Map<String, Value>, k: &str) -> Result<Vec<Rows>> {
    obj.get(k)
        .and_then(Value::as_array)
        .and_then(|a| a.iter().map(rows_of).collect())
        .ok_or_else(|| Error::config(format!("model.{k}"), "expected a list of row-major matrices"))
}

fn str_list(obj: &Map<String, Value>, k: &str) -> Result<Vec<String>> {
    obj.get(k)
        .and_then(Value::as_array)
        .and_then(|a| a.iter().map(|v| v.as_str().map(str::to_string)).collect())
        .ok_or_else(|| Error::config(format!("model.{k}"), "expected a list of polynomial strings"))
}

impl From<&LinearPlant> for ModelSpec {
    fn from(p: &LinearPlant) -> Self {
        let r = |m: &DMatrix<f64>| matrix_to_rows(m);
        ModelSpec::Linear {
            a: r(p.a()),
            b: r(p.b()),
            c: p.c().iter().map(r).collect(),
            k0: r(&p.gains().k0),
            k_theta: p.gains().per_param.iter().map(r).collect(),
            omega: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let spec = ModelSpec::Linear {
            a: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            b: vec![vec![0.0], vec![1.0]],
            c: vec![vec![vec![0.0, 0.0], vec![1.0, 1.0]]],
            k0: vec![vec![-1.0, -3.0]],
            k_theta: vec![vec![vec![-1.0, -1.0]]],
            omega: None,
        };
        assert_eq!(ModelSpec::from_json(&spec.to_json()).unwrap(), spec);
        let m = spec.build().unwrap();
        assert_eq!(m.dims(), Dims { n: 2, m: 1, l: 1 });
    }

    #[test]
    fn unknown_name_cites_path() {
        let err = ModelSpec::from_json(&json!({"name": "nope"})).unwrap_err();
        assert!(err.to_string().contains("model.name"));
        let err = ModelSpec::from_json(&json!({"name": "example_4_2", "c": 1})).unwrap_err();
        assert!(err.to_string().contains("model.k1"));
    }

    #[test]
    fn linear_poly_rendering_matches_planar() {
        let lin = ModelSpec::Linear {
            a: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            b: vec![vec![0.0], vec![1.0]],
            c: vec![vec![vec![0.0, 0.0], vec![1.0, 2.0]]],
            k0: vec![vec![-1.0, -3.0]],
            k_theta: vec![vec![vec![-1.0, -2.0]]],
            omega: None,
        };
        let planar = ModelSpec::Planar { c: 2.0, k1: 1.0, k2: 3.0 };
        let a = lin.poly_plant().unwrap().closed_field(&[0.7], &[-0.4]).unwrap();
        let b = planar.poly_plant().unwrap().closed_field(&[0.7], &[-0.4]).unwrap();
        for (p, q) in a.components().iter().zip(b.components()) {
            assert!((p - q).coefficient_norm() < 1e-12, "{p} vs {q}");
        }
    }
}
