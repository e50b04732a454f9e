//! JSON scene files: a pair of connections given as polynomials in global base
//! coordinates, an evaluation point, and optional family parameters.
//!
//! Rationals are `"num/den"` strings. Connection coefficients are nested arrays
//! (`[λ][μ][ν]` for `Λ`, `[i][j][λ]` for `K`) of term lists
//! `{"exponents": [..], "coeff": ".."}`.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::connections::{ClassicalConnection, GeneralLinearConnection};
use crate::error::{Error, Result};
use crate::jet::{format_rational, parse_rational, JetPoly, Rational};
use crate::natural::{Params14, Params15};
use crate::random;
use crate::tensor::{nest, unnest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionRecord {
    pub dims: Vec<usize>,
    pub order: u32,
    pub coeffs: serde_json::Value,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub symmetric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub m: usize,
    pub n: usize,
    pub order: u32,
    #[serde(default)]
    pub point: Vec<String>,
    pub lambda: ConnectionRecord,
    pub k: ConnectionRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params15: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params14: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A validated scene with all jets recentred at `point`.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub m: usize,
    pub n: usize,
    pub order: u32,
    pub point: Vec<Rational>,
    pub lambda: ClassicalConnection,
    pub k: GeneralLinearConnection,
    pub params15: Option<Params15>,
    pub params14: Option<Params14>,
    pub seed: Option<u64>,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Scene> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// SHA-256 of the canonical compact serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scene serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn from_parts(
        lambda: &ClassicalConnection,
        k: &GeneralLinearConnection,
        params15: Option<&Params15>,
        params14: Option<&Params14>,
        seed: Option<u64>,
    ) -> Scene {
        let (m, n) = (k.m(), k.n());
        Scene {
            m,
            n,
            order: lambda.order().min(k.order()),
            point: vec!["0".into(); m],
            lambda: ConnectionRecord {
                dims: vec![m, m, m],
                order: lambda.order(),
                coeffs: nest(&[m, m, m], lambda.table().components()),
                symmetric: lambda.is_symmetric(),
            },
            k: ConnectionRecord {
                dims: vec![n, n, m],
                order: k.order(),
                coeffs: nest(&[n, n, m], k.table().components()),
                symmetric: false,
            },
            params15: params15.map(Params15::to_map),
            params14: params14.map(Params14::to_map),
            seed,
        }
    }

    /// A random torsionful scene with both parameter families filled in.
    pub fn random(seed: u64, m: usize, n: usize, order: u32) -> Scene {
        let mut rng = random::rng(seed);
        let lambda = random::classical(&mut rng, m, n, order, false);
        let k = random::general_linear(&mut rng, m, n, order);
        let p15 = random::params15(&mut rng);
        let p14 = random::params14(&mut rng);
        Scene::from_parts(&lambda, &k, Some(&p15), Some(&p14), Some(seed))
    }

    pub fn load(&self) -> Result<LoadedScene> {
        let (m, n) = (self.m, self.n);
        if m == 0 || n == 0 {
            return Err(Error::Invalid("m and n must be positive".into()));
        }
        if self.lambda.dims != [m, m, m] {
            return Err(Error::Shape(format!(
                "lambda dims {:?}, expected {:?}",
                self.lambda.dims,
                [m, m, m]
            )));
        }
        if self.k.dims != [n, n, m] {
            return Err(Error::Shape(format!(
                "k dims {:?}, expected {:?}",
                self.k.dims,
                [n, n, m]
            )));
        }
        let point: Vec<Rational> = if self.point.is_empty() {
            vec![Rational::zero(); m]
        } else {
            self.point.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?
        };
        if point.len() != m {
            return Err(Error::PointLength {
                expected: m,
                got: point.len(),
            });
        }
        let read = |rec: &ConnectionRecord| -> Result<Vec<JetPoly>> {
            let mut out = Vec::new();
            unnest(&rec.dims, &rec.coeffs, m, rec.order, &mut out)?;
            out.into_iter()
                .map(|p| p.recenter(&point).map(|q| q.truncate(self.order)))
                .collect()
        };
        let lambda = ClassicalConnection::from_table(m, n, read(&self.lambda)?, self.lambda.symmetric)?;
        let k = GeneralLinearConnection::from_table(m, n, read(&self.k)?)?;
        Ok(LoadedScene {
            m,
            n,
            order: self.order.min(self.lambda.order).min(self.k.order),
            point,
            lambda,
            k,
            params15: self.params15.as_ref().map(Params15::from_map).transpose()?,
            params14: self.params14.as_ref().map(Params14::from_map).transpose()?,
            seed: self.seed,
        })
    }
}

pub fn format_point(point: &[Rational]) -> Vec<String> {
    point.iter().map(format_rational).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{int, ratio};

    #[test]
    fn roundtrip_random_scene() {
        let scene = Scene::random(3, 2, 1, 3);
        let text = scene.to_json();
        let back = Scene::from_json(&text).unwrap();
        assert_eq!(back, scene);
        assert_eq!(back.digest(), scene.digest());
        let loaded = back.load().unwrap();
        assert_eq!(loaded.params15.unwrap().to_map(), scene.params15.clone().unwrap());
        assert_ne!(Scene::random(4, 2, 1, 3).digest(), scene.digest());
    }

    #[test]
    fn point_recentres() {
        let x0 = JetPoly::var(1, 2, 0).unwrap();
        let k = GeneralLinearConnection::from_fn(1, 1, 2, |_, _, _| x0.clone());
        let l = ClassicalConnection::zero(1, 1, 2);
        let mut scene = Scene::from_parts(&l, &k, None, None, None);
        scene.point = vec!["3/2".into()];
        let loaded = scene.load().unwrap();
        let got = loaded.k.get(0, 0, 0);
        assert_eq!(got.constant_term(), ratio(3, 2));
        assert_eq!(got.linear_coeff(0), int(1));
    }

    #[test]
    fn rejects_bad_input() {
        let mut scene = Scene::random(1, 2, 1, 2);
        scene.k.dims = vec![2, 2, 2];
        assert!(scene.load().is_err());
        let mut scene = Scene::random(1, 2, 1, 2);
        scene.point = vec!["1".into()];
        assert!(matches!(scene.load(), Err(Error::PointLength { .. })));
        assert!(Scene::from_json("{\"m\": 1}").is_err());
        let mut scene = Scene::random(1, 2, 1, 2);
        scene.lambda.symmetric = true;
        assert!(matches!(scene.load(), Err(Error::NotSymmetric)));
    }
}
