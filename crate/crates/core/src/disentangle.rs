//! Cross-image spatial correlation, attention masks, and disentangled
//! attribute/object features for a triplet `(I, I_attr, I_obj)`.
//!
//! For an anchor map `F` and a partner map `G` (both `d×l`), the correlation
//! `C[p, q]` is the cosine between anchor position `p` and partner position
//! `q`. Softmax along rows gives, for each anchor position, attention over
//! partner positions; averaging those rows gives a unit-mass profile over the
//! partner's positions. Softmax along columns, averaged over columns, gives
//! the matching profile over the anchor's positions. Running the row pipeline
//! on `−C` highlights the partner positions least like the anchor.
//!
//! With `I_attr` sharing the attribute and `I_obj` sharing the object:
//!
//! ```text
//! v_attr     = pool(F_attr, partner(C_attr)) + pool(F, anchor(C_attr))
//! v_obj      = pool(F_obj,  partner(C_obj))  + pool(F, anchor(C_obj))
//! v_non_attr = pool(F_obj,  negative(C_obj))
//! v_non_obj  = pool(F_attr, negative(C_attr))
//! ```

use crate::embedding_store::FeatureMap;
use crate::error::{Error, Result};
use crate::model::feature_tensor;
use crate::numeric::{Graph, Tensor, Var};
use crate::scalar::Scalar;

/// Graph-level forms of every operation.
pub mod ops {
    use super::*;

    pub fn correlation<T: Scalar>(g: &mut Graph<T>, anchor: Var, partner: Var) -> Result<Var> {
        let (a, b) = (g.value(anchor).shape(), g.value(partner).shape());
        if a != b || a.len() != 2 {
            return Err(Error::dim("correlation", a, b));
        }
        g.col_cosine(anchor, partner)
    }

    fn require_square<T: Scalar>(g: &Graph<T>, c: Var) -> Result<usize> {
        match *g.value(c).shape() {
            [r, k] if r == k => Ok(r),
            ref other => Err(Error::dim("mask", other, &[other.first().copied().unwrap_or(0); 2])),
        }
    }

    /// Mean of each column of `m` (`l×l`), as a length-`l` vector.
    fn mean_over_rows<T: Scalar>(g: &mut Graph<T>, m: Var, l: usize) -> Result<Var> {
        let w = g.constant(Tensor::full(&[1, l], T::one() / T::lit(l as f64)));
        let r = g.matmul(w, m)?;
        g.reshape(r, &[l])
    }

    /// Mean of each row of `m` (`l×l`), as a length-`l` vector.
    fn mean_over_cols<T: Scalar>(g: &mut Graph<T>, m: Var, l: usize) -> Result<Var> {
        let w = g.constant(Tensor::full(&[l, 1], T::one() / T::lit(l as f64)));
        let r = g.matmul(m, w)?;
        g.reshape(r, &[l])
    }

    /// `(anchor mask, partner mask)` from a correlation matrix.
    pub fn positive_masks<T: Scalar>(g: &mut Graph<T>, c: Var) -> Result<(Var, Var)> {
        let l = require_square(g, c)?;
        let rows = g.row_softmax(c)?;
        let partner = mean_over_rows(g, rows, l)?;
        let cols = g.col_softmax(c)?;
        let anchor = mean_over_cols(g, cols, l)?;
        Ok((anchor, partner))
    }

    /// Partner mask of `−C`.
    pub fn negative_mask<T: Scalar>(g: &mut Graph<T>, c: Var) -> Result<Var> {
        let l = require_square(g, c)?;
        let neg = g.neg(c);
        let rows = g.row_softmax(neg)?;
        mean_over_rows(g, rows, l)
    }

    /// `Σ_j m_j · F[:, j]` as a length-`d` vector.
    pub fn pool<T: Scalar>(g: &mut Graph<T>, feature: Var, mask: Var) -> Result<Var> {
        let (d, l) = (g.value(feature).rows(), g.value(feature).cols());
        if g.value(feature).rank() != 2 || g.value(mask).len() != l || g.value(mask).rank() != 1 {
            return Err(Error::dim("pool", g.value(feature).shape(), g.value(mask).shape()));
        }
        let m = g.reshape(mask, &[l, 1])?;
        let r = g.matmul(feature, m)?;
        g.reshape(r, &[d])
    }

    /// Mask nodes for one triplet.
    #[derive(Clone, Copy, Debug)]
    pub struct MaskVars {
        pub attr_anchor: Var,
        pub attr_partner: Var,
        pub obj_anchor: Var,
        pub obj_partner: Var,
        pub non_attr: Var,
        pub non_obj: Var,
    }

    /// Disentangled feature nodes for one triplet.
    #[derive(Clone, Copy, Debug)]
    pub struct FeatureVars {
        pub v_attr: Var,
        pub v_obj: Var,
        pub v_non_attr: Var,
        pub v_non_obj: Var,
        pub masks: MaskVars,
    }

    pub fn disentangle<T: Scalar>(
        g: &mut Graph<T>,
        anchor: Var,
        same_attr: Var,
        same_obj: Var,
    ) -> Result<FeatureVars> {
        let shape = g.value(anchor).shape().to_vec();
        for v in [same_attr, same_obj] {
            if g.value(v).shape() != shape.as_slice() {
                return Err(Error::dim("disentangled_features", &shape, g.value(v).shape()));
            }
        }
        let c_attr = correlation(g, anchor, same_attr)?;
        let c_obj = correlation(g, anchor, same_obj)?;
        let (attr_anchor, attr_partner) = positive_masks(g, c_attr)?;
        let (obj_anchor, obj_partner) = positive_masks(g, c_obj)?;
        let non_attr = negative_mask(g, c_obj)?;
        let non_obj = negative_mask(g, c_attr)?;

        let a1 = pool(g, same_attr, attr_partner)?;
        let a2 = pool(g, anchor, attr_anchor)?;
        let v_attr = g.add(a1, a2)?;
        let o1 = pool(g, same_obj, obj_partner)?;
        let o2 = pool(g, anchor, obj_anchor)?;
        let v_obj = g.add(o1, o2)?;
        let v_non_attr = pool(g, same_obj, non_attr)?;
        let v_non_obj = pool(g, same_attr, non_obj)?;
        Ok(FeatureVars {
            v_attr,
            v_obj,
            v_non_attr,
            v_non_obj,
            masks: MaskVars {
                attr_anchor,
                attr_partner,
                obj_anchor,
                obj_partner,
                non_attr,
                non_obj,
            },
        })
    }
}

/// Spatial correlation matrix `C[p, q] = cos(F[:, p], G[:, q])`.
pub fn correlation<T: Scalar>(anchor: &Tensor<T>, partner: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let a = g.constant(anchor.clone());
    let b = g.constant(partner.clone());
    let c = ops::correlation(&mut g, a, b)?;
    Ok(g.value(c).clone())
}

/// Masks from one correlation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveMasks<T: Scalar = f64> {
    /// Over the anchor's positions.
    pub anchor: Tensor<T>,
    /// Over the partner's positions.
    pub partner: Tensor<T>,
}

pub fn positive_masks<T: Scalar>(c: &Tensor<T>) -> Result<PositiveMasks<T>> {
    let mut g = Graph::new();
    let cv = g.constant(c.clone());
    let (a, p) = ops::positive_masks(&mut g, cv)?;
    Ok(PositiveMasks {
        anchor: g.value(a).clone(),
        partner: g.value(p).clone(),
    })
}

/// Partner-side mask of the negated correlation.
pub fn negative_mask<T: Scalar>(c: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let cv = g.constant(c.clone());
    let m = ops::negative_mask(&mut g, cv)?;
    Ok(g.value(m).clone())
}

pub fn pool<T: Scalar>(feature: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let f = g.constant(feature.clone());
    let m = g.constant(mask.clone());
    let v = ops::pool(&mut g, f, m)?;
    Ok(g.value(v).clone())
}

/// The six masks of one triplet. Every mask is non-negative with unit sum.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet<T: Scalar = f64> {
    pub attr_anchor: Tensor<T>,
    pub attr_partner: Tensor<T>,
    pub obj_anchor: Tensor<T>,
    pub obj_partner: Tensor<T>,
    pub non_attr: Tensor<T>,
    pub non_obj: Tensor<T>,
}

impl<T: Scalar> MaskSet<T> {
    pub fn all(&self) -> [&Tensor<T>; 6] {
        [
            &self.attr_anchor,
            &self.attr_partner,
            &self.obj_anchor,
            &self.obj_partner,
            &self.non_attr,
            &self.non_obj,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisentangledFeatures<T: Scalar = f64> {
    pub v_attr: Tensor<T>,
    pub v_obj: Tensor<T>,
    pub v_non_attr: Tensor<T>,
    pub v_non_obj: Tensor<T>,
    pub masks: MaskSet<T>,
}

pub fn disentangled_features<T: Scalar>(
    anchor: &Tensor<T>,
    same_attr: &Tensor<T>,
    same_obj: &Tensor<T>,
) -> Result<DisentangledFeatures<T>> {
    let mut g = Graph::new();
    let f = g.constant(anchor.clone());
    let fa = g.constant(same_attr.clone());
    let fo = g.constant(same_obj.clone());
    let v = ops::disentangle(&mut g, f, fa, fo)?;
    let m = v.masks;
    let get = |var| g.value(var).clone();
    Ok(DisentangledFeatures {
        v_attr: get(v.v_attr),
        v_obj: get(v.v_obj),
        v_non_attr: get(v.v_non_attr),
        v_non_obj: get(v.v_non_obj),
        masks: MaskSet {
            attr_anchor: get(m.attr_anchor),
            attr_partner: get(m.attr_partner),
            obj_anchor: get(m.obj_anchor),
            obj_partner: get(m.obj_partner),
            non_attr: get(m.non_attr),
            non_obj: get(m.non_obj),
        },
    })
}

/// [`disentangled_features`] for dataset feature maps.
pub fn disentangle_maps(
    anchor: &FeatureMap,
    same_attr: &FeatureMap,
    same_obj: &FeatureMap,
) -> Result<DisentangledFeatures<f64>> {
    disentangled_features(
        &feature_tensor(anchor),
        &feature_tensor(same_attr),
        &feature_tensor(same_obj),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(n: usize) -> Tensor<f64> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::new(vec![n, n], data).unwrap()
    }

    #[test]
    fn orthonormal_self_correlation_is_identity() {
        let c = correlation(&eye(4), &eye(4)).unwrap();
        assert_eq!(c, eye(4));
    }

    #[test]
    fn identical_columns_correlate_fully() {
        let f = Tensor::<f64>::from_rows(&[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]]).unwrap();
        let c = correlation(&f, &f).unwrap();
        assert!(c.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn zero_correlation_gives_uniform_masks() {
        let c = Tensor::<f64>::zeros(&[5, 5]);
        let m = positive_masks(&c).unwrap();
        let n = negative_mask(&c).unwrap();
        for mask in [&m.anchor, &m.partner, &n] {
            assert!(mask.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
        }
    }

    #[test]
    fn sharp_diagonal_still_uniform() {
        let c = eye(4).scale(200.0);
        let m = positive_masks(&c).unwrap();
        for v in m.anchor.data().iter().chain(m.partner.data()) {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_is_positive_of_negation() {
        let c = Tensor::from_rows(&[vec![0.3, -0.2], vec![0.9, 0.1]]).unwrap();
        let neg = negative_mask(&c).unwrap();
        let pos = positive_masks(&c.scale(-1.0)).unwrap();
        assert_eq!(neg, pos.partner);
    }

    #[test]
    fn pool_uniform_and_one_hot() {
        let f = Tensor::<f64>::from_rows(&[vec![1.0, 2.0, 6.0], vec![0.0, -3.0, 3.0]]).unwrap();
        let u = pool(&f, &Tensor::vector(vec![1.0 / 3.0; 3])).unwrap();
        assert!((u.data()[0] - 3.0).abs() < 1e-15 && u.data()[1].abs() < 1e-15);
        let h = pool(&f, &Tensor::vector(vec![0.0, 1.0, 0.0])).unwrap();
        assert_eq!(h.data(), &[2.0, -3.0]);
        assert!(pool(&f, &Tensor::vector(vec![0.5, 0.5])).is_err());
    }

    #[test]
    fn degenerate_triplet() {
        let f = eye(3);
        let out = disentangled_features(&f, &f, &f).unwrap();
        let mean = 1.0 / 3.0;
        for v in [&out.v_attr, &out.v_obj] {
            for &x in v.data() {
                assert!((x - 2.0 * mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 4]);
        assert!(matches!(correlation(&a, &b), Err(Error::Dimension { .. })));
        assert!(disentangled_features(&a, &a, &b).is_err());
    }
}
