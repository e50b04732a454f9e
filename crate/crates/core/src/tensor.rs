//! Dense tensor fields with variance-typed slots.
//!
//! Coordinates are packed base first: on `M` the variables are `x^λ`; on `E`
//! they are followed by `y^i` at `m + i`; on `J¹E` by `y^i_λ` at
//! `m + n + i*m + λ`. A total-space index `A` means the base index `A` when
//! `A < m` and the fiber index `A - m` otherwise.
//!
//! Index-notation components `X_a{}^b{}_c` are stored with slot order
//! `[down a, up b, down c]`, left to right as written.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{int, JetPoly, Rational, TermRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    M,
    E,
    J1E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Space {
    pub kind: SpaceKind,
    pub m: usize,
    pub n: usize,
}

impl Space {
    pub fn base(m: usize, n: usize) -> Space {
        Space {
            kind: SpaceKind::M,
            m,
            n,
        }
    }

    pub fn total(m: usize, n: usize) -> Space {
        Space {
            kind: SpaceKind::E,
            m,
            n,
        }
    }

    pub fn jet(m: usize, n: usize) -> Space {
        Space {
            kind: SpaceKind::J1E,
            m,
            n,
        }
    }

    pub fn with_kind(self, kind: SpaceKind) -> Space {
        Space { kind, ..self }
    }

    pub fn num_vars(&self) -> usize {
        match self.kind {
            SpaceKind::M => self.m,
            SpaceKind::E => self.m + self.n,
            SpaceKind::J1E => self.m + self.n + self.n * self.m,
        }
    }

    /// Variable index of `x^λ`.
    pub fn x(&self, lambda: usize) -> usize {
        lambda
    }

    /// Variable index of `y^i`.
    pub fn y(&self, i: usize) -> usize {
        self.m + i
    }

    /// Variable index of `y^i_λ`.
    pub fn w(&self, i: usize, lambda: usize) -> usize {
        self.m + self.n + i * self.m + lambda
    }

    pub fn y_poly(&self, order: u32, i: usize) -> JetPoly {
        JetPoly::var(self.num_vars(), order, self.y(i)).expect("fiber coordinate on M")
    }

    pub fn w_poly(&self, order: u32, i: usize, lambda: usize) -> JetPoly {
        JetPoly::var(self.num_vars(), order, self.w(i, lambda)).expect("jet coordinate off J1E")
    }

    pub fn zero(&self, order: u32) -> JetPoly {
        JetPoly::zero(self.num_vars(), order)
    }

    pub fn constant(&self, order: u32, c: Rational) -> JetPoly {
        JetPoly::constant(self.num_vars(), order, c)
    }
}

/// Coarse index class of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexClass {
    Base,
    Fiber,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotKind {
    BaseUp,
    BaseDown,
    FiberUp,
    FiberDown,
    TotalUp,
    TotalDown,
}

impl SlotKind {
    pub fn new(class: IndexClass, up: bool) -> SlotKind {
        match (class, up) {
            (IndexClass::Base, true) => SlotKind::BaseUp,
            (IndexClass::Base, false) => SlotKind::BaseDown,
            (IndexClass::Fiber, true) => SlotKind::FiberUp,
            (IndexClass::Fiber, false) => SlotKind::FiberDown,
            (IndexClass::Total, true) => SlotKind::TotalUp,
            (IndexClass::Total, false) => SlotKind::TotalDown,
        }
    }

    pub fn class(self) -> IndexClass {
        match self {
            SlotKind::BaseUp | SlotKind::BaseDown => IndexClass::Base,
            SlotKind::FiberUp | SlotKind::FiberDown => IndexClass::Fiber,
            SlotKind::TotalUp | SlotKind::TotalDown => IndexClass::Total,
        }
    }

    pub fn is_up(self) -> bool {
        matches!(self, SlotKind::BaseUp | SlotKind::FiberUp | SlotKind::TotalUp)
    }

    pub fn dim(self, m: usize, n: usize) -> usize {
        match self.class() {
            IndexClass::Base => m,
            IndexClass::Fiber => n,
            IndexClass::Total => m + n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymMode {
    Sym,
    Antisym,
}

/// Iterates over all multi-indices of a dense shape in row-major order.
pub fn indices(shape: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = shape.iter().product();
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; shape.len()];
        for k in (0..shape.len()).rev() {
            idx[k] = flat % shape[k];
            flat /= shape[k];
        }
        idx
    })
}

/// A tensor field whose components are jets over one coordinate space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorField {
    space: Space,
    signature: Vec<SlotKind>,
    order: u32,
    components: Vec<JetPoly>,
}

impl TensorField {
    pub fn zeros(space: Space, signature: Vec<SlotKind>, order: u32) -> TensorField {
        let len = signature.iter().map(|s| s.dim(space.m, space.n)).product();
        TensorField {
            space,
            signature,
            order,
            components: vec![space.zero(order); len],
        }
    }

    /// Builds a field from a component function. Components are truncated to
    /// `order`; a component of lower order lowers the field's order.
    pub fn from_fn<F>(space: Space, signature: Vec<SlotKind>, order: u32, mut f: F) -> TensorField
    where
        F: FnMut(&[usize]) -> JetPoly,
    {
        let shape: Vec<usize> = signature.iter().map(|s| s.dim(space.m, space.n)).collect();
        let components: Vec<JetPoly> = indices(&shape)
            .map(|idx| {
                let p = f(&idx);
                assert_eq!(p.num_vars(), space.num_vars(), "component lives on wrong space");
                p.truncate(order)
            })
            .collect();
        let order = components.iter().map(JetPoly::order).min().unwrap_or(order).min(order);
        let components = components.into_iter().map(|p| p.truncate(order)).collect();
        TensorField {
            space,
            signature,
            order,
            components,
        }
    }

    pub fn from_components(space: Space, signature: Vec<SlotKind>, components: Vec<JetPoly>) -> Result<TensorField> {
        let len: usize = signature.iter().map(|s| s.dim(space.m, space.n)).product();
        if components.len() != len {
            return Err(Error::Shape(format!(
                "expected {len} components, got {}",
                components.len()
            )));
        }
        for p in &components {
            if p.num_vars() != space.num_vars() {
                return Err(Error::VarCountMismatch {
                    left: space.num_vars(),
                    right: p.num_vars(),
                });
            }
        }
        let order = components.iter().map(JetPoly::order).min().unwrap_or(u32::MAX);
        let components = components.into_iter().map(|p| p.truncate(order)).collect();
        Ok(TensorField {
            space,
            signature,
            order,
            components,
        })
    }

    pub fn scalar(space: Space, p: JetPoly) -> TensorField {
        let order = p.order();
        TensorField {
            space,
            signature: Vec::new(),
            order,
            components: vec![p],
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn signature(&self) -> &[SlotKind] {
        &self.signature
    }

    pub fn rank(&self) -> usize {
        self.signature.len()
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn shape(&self) -> Vec<usize> {
        self.signature
            .iter()
            .map(|s| s.dim(self.space.m, self.space.n))
            .collect()
    }

    pub fn components(&self) -> &[JetPoly] {
        &self.components
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.signature.len(), "index arity");
        let mut flat = 0;
        for (k, &i) in idx.iter().enumerate() {
            let d = self.signature[k].dim(self.space.m, self.space.n);
            assert!(i < d, "index {i} out of range in slot {k}");
            flat = flat * d + i;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> &JetPoly {
        &self.components[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], p: JetPoly) {
        let k = self.flat_index(idx);
        self.components[k] = p.truncate(self.order);
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(JetPoly::is_zero)
    }

    pub fn truncate(&self, order: u32) -> TensorField {
        let order = order.min(self.order);
        TensorField {
            space: self.space,
            signature: self.signature.clone(),
            order,
            components: self.components.iter().map(|p| p.truncate(order)).collect(),
        }
    }

    pub fn map<F: FnMut(&JetPoly) -> JetPoly>(&self, mut f: F) -> TensorField {
        let components: Vec<JetPoly> = self.components.iter().map(&mut f).collect();
        let order = components.iter().map(JetPoly::order).min().unwrap_or(self.order);
        TensorField {
            space: self.space,
            signature: self.signature.clone(),
            order,
            components: components.into_iter().map(|p| p.truncate(order)).collect(),
        }
    }

    fn check_same(&self, other: &TensorField) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                left: self.space.kind,
                right: other.space.kind,
            });
        }
        if self.signature != other.signature {
            return Err(Error::Signature(format!(
                "{:?} vs {:?}",
                self.signature, other.signature
            )));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &TensorField) -> Result<TensorField> {
        self.check_same(other)?;
        let order = self.order.min(other.order);
        Ok(TensorField {
            space: self.space,
            signature: self.signature.clone(),
            order,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| (a + b).truncate(order))
                .collect(),
        })
    }

    pub fn checked_sub(&self, other: &TensorField) -> Result<TensorField> {
        self.checked_add(&other.scale(&int(-1)))
    }

    pub fn scale(&self, s: &Rational) -> TensorField {
        self.map(|p| p.scale(s))
    }

    /// Multiplies every component by a scalar function.
    pub fn mul_scalar(&self, f: &JetPoly) -> TensorField {
        self.map(|p| p * f)
    }

    pub fn tensor_product(&self, other: &TensorField) -> Result<TensorField> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                left: self.space.kind,
                right: other.space.kind,
            });
        }
        let order = self.order.min(other.order);
        let mut components = Vec::with_capacity(self.components.len() * other.components.len());
        for a in &self.components {
            for b in &other.components {
                components.push(a * b);
            }
        }
        let mut signature = self.signature.clone();
        signature.extend_from_slice(&other.signature);
        Ok(TensorField {
            space: self.space,
            signature,
            order,
            components,
        })
    }

    /// Sums over a paired up/down index; both slots are removed.
    pub fn contract(&self, up_slot: usize, down_slot: usize) -> Result<TensorField> {
        let rank = self.rank();
        for slot in [up_slot, down_slot] {
            if slot >= rank {
                return Err(Error::SlotOutOfRange { slot, rank });
            }
        }
        let (su, sd) = (self.signature[up_slot], self.signature[down_slot]);
        if up_slot == down_slot || su.is_up() == sd.is_up() || !su.is_up() {
            return Err(Error::VarianceMismatch {
                first: up_slot,
                second: down_slot,
            });
        }
        let (m, n) = (self.space.m, self.space.n);
        if su.class() != sd.class() || su.dim(m, n) != sd.dim(m, n) {
            return Err(Error::DimensionMismatch {
                first: up_slot,
                second: down_slot,
            });
        }
        let dim = su.dim(m, n);
        let signature: Vec<SlotKind> = self
            .signature
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != up_slot && *k != down_slot)
            .map(|(_, s)| *s)
            .collect();
        let mut full = vec![0; rank];
        Ok(TensorField::from_fn(self.space, signature, self.order, |idx| {
            let mut it = idx.iter();
            for (k, slot) in full.iter_mut().enumerate() {
                if k != up_slot && k != down_slot {
                    *slot = *it.next().expect("arity");
                }
            }
            let mut acc = self.space.zero(self.order);
            for d in 0..dim {
                full[up_slot] = d;
                full[down_slot] = d;
                acc = &acc + self.get(&full);
            }
            acc
        }))
    }

    /// Reorders slots: slot `k` of the result is slot `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<TensorField> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank {
            return Err(Error::Arity {
                expected: rank,
                got: perm.len(),
            });
        }
        for &p in perm {
            if p >= rank || seen[p] {
                return Err(Error::Invalid(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let signature = perm.iter().map(|&p| self.signature[p]).collect();
        let mut old = vec![0; rank];
        Ok(TensorField::from_fn(self.space, signature, self.order, |idx| {
            for (k, &p) in perm.iter().enumerate() {
                old[p] = idx[k];
            }
            self.get(&old).clone()
        }))
    }

    /// `½(t ± t with the two slots swapped)`.
    pub fn sym_antisym(&self, slots: (usize, usize), mode: SymMode) -> Result<TensorField> {
        let (a, b) = slots;
        let rank = self.rank();
        for slot in [a, b] {
            if slot >= rank {
                return Err(Error::SlotOutOfRange { slot, rank });
            }
        }
        if self.signature[a] != self.signature[b] {
            return Err(Error::SlotKindMismatch {
                first: self.signature[a],
                second: self.signature[b],
            });
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(a, b);
        let swapped = self.permute(&perm)?;
        let sum = match mode {
            SymMode::Sym => self.checked_add(&swapped)?,
            SymMode::Antisym => self.checked_sub(&swapped)?,
        };
        Ok(sum.scale(&crate::jet::ratio(1, 2)))
    }

    /// Partial derivative of every component; order drops by one.
    pub fn partial(&self, var: usize) -> Result<TensorField> {
        let components = self
            .components
            .iter()
            .map(|p| p.partial(var))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorField {
            space: self.space,
            signature: self.signature.clone(),
            order: self.order.saturating_sub(1),
            components,
        })
    }

    /// Reinterprets a field on `M` (or `E`) as one on a larger space; the
    /// variable packing makes this a prefix embedding.
    pub fn lift_to(&self, kind: SpaceKind) -> TensorField {
        let space = self.space.with_kind(kind);
        assert!(space.num_vars() >= self.space.num_vars(), "lift to smaller space");
        TensorField {
            space,
            signature: self.signature.clone(),
            order: self.order,
            components: self
                .components
                .iter()
                .map(|p| p.embed_prefix(space.num_vars()))
                .collect(),
        }
    }

    /// Values of all components at a point, in row-major order.
    pub fn evaluate(&self, point: &[Rational]) -> Result<Vec<Rational>> {
        self.components.iter().map(|p| p.evaluate(point)).collect()
    }

    pub fn to_record(&self) -> TensorRecord {
        TensorRecord {
            space: self.space,
            signature: self.signature.clone(),
            order: self.order,
            components: nest(&self.shape(), &self.components),
        }
    }
}

/// Nested-array serialization of a tensor field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub space: Space,
    pub signature: Vec<SlotKind>,
    pub order: u32,
    pub components: serde_json::Value,
}

impl TensorRecord {
    pub fn to_field(&self) -> Result<TensorField> {
        let shape: Vec<usize> = self
            .signature
            .iter()
            .map(|s| s.dim(self.space.m, self.space.n))
            .collect();
        let mut comps = Vec::new();
        unnest(&shape, &self.components, self.space.num_vars(), self.order, &mut comps)?;
        TensorField::from_components(self.space, self.signature.clone(), comps)
    }
}

/// Nests a flat row-major component list into JSON arrays of term records.
pub fn nest(shape: &[usize], comps: &[JetPoly]) -> serde_json::Value {
    if shape.is_empty() {
        return serde_json::to_value(comps[0].to_records()).expect("records serialize");
    }
    let stride = comps.len() / shape[0].max(1);
    serde_json::Value::Array(
        (0..shape[0])
            .map(|k| nest(&shape[1..], &comps[k * stride..(k + 1) * stride]))
            .collect(),
    )
}

/// Inverse of [`nest`].
pub fn unnest(
    shape: &[usize],
    value: &serde_json::Value,
    num_vars: usize,
    order: u32,
    out: &mut Vec<JetPoly>,
) -> Result<()> {
    if shape.is_empty() {
        let recs: Vec<TermRecord> =
            serde_json::from_value(value.clone()).map_err(|e| Error::Parse(format!("bad term records: {e}")))?;
        out.push(JetPoly::from_records(num_vars, order, &recs)?);
        return Ok(());
    }
    let arr = value
        .as_array()
        .ok_or_else(|| Error::Parse("expected nested coefficient array".into()))?;
    if arr.len() != shape[0] {
        return Err(Error::Shape(format!(
            "expected {} entries, got {}",
            shape[0],
            arr.len()
        )));
    }
    for v in arr {
        unnest(&shape[1..], v, num_vars, order, out)?;
    }
    Ok(())
}

/// The identity tensor `δ` of an index class, slots `[Up, Down]`.
pub fn kronecker(space: Space, class: IndexClass, order: u32) -> TensorField {
    let sig = vec![SlotKind::new(class, true), SlotKind::new(class, false)];
    TensorField::from_fn(space, sig, order, |idx| {
        if idx[0] == idx[1] {
            space.constant(order, int(1))
        } else {
            space.zero(order)
        }
    })
}

/// The Liouville field `y^i ∂_i` as a `FiberUp` vector on `E` or `J¹E`.
pub fn liouville(space: Space, order: u32) -> Result<TensorField> {
    if space.kind == SpaceKind::M {
        return Err(Error::WrongSpace {
            expected: SpaceKind::E,
            got: space.kind,
        });
    }
    Ok(TensorField::from_fn(space, vec![SlotKind::FiberUp], order, |idx| {
        space.y_poly(order, idx[0])
    }))
}
