//! Per-layer key/value storage for previously processed token positions.
//!
//! Every layer holds one key tensor and one value tensor with logical shape
//! `(num_heads, cached_len, head_dim)`. Storage is position-major: the
//! `head_dim` floats for `(pos, head)` live at offset
//! `(pos * num_heads + head) * head_dim`, which makes append a plain
//! `extend` and truncation a logical length change that keeps the
//! allocation for re-use.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("invalid cache shape {0:?}: every dimension must be at least 1")]
    InvalidShape(CacheShape),
    #[error("cannot truncate cache of length {len} to {requested}")]
    TruncateBeyondLength { requested: usize, len: usize },
    #[error("cache capacity {capacity} exceeded")]
    CapacityExceeded { capacity: usize },
}

/// Geometry a model reports so that callers can allocate a matching cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheShape {
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub capacity: usize,
}

impl CacheShape {
    pub fn new(n_layers: usize, n_heads: usize, head_dim: usize, capacity: usize) -> Self {
        Self {
            n_layers,
            n_heads,
            head_dim,
            capacity,
        }
    }

    /// Floats stored per position per layer, for keys or values alone.
    pub fn position_stride(&self) -> usize {
        self.n_heads * self.head_dim
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct LayerKv {
    keys: Vec<f32>,
    values: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct KvCache {
    shape: CacheShape,
    layers: Vec<LayerKv>,
    len: usize,
}

impl KvCache {
    pub fn new(shape: CacheShape) -> Result<Self, CacheError> {
        if shape.n_layers == 0 || shape.n_heads == 0 || shape.head_dim == 0 || shape.capacity == 0 {
            return Err(CacheError::InvalidShape(shape));
        }
        Ok(Self {
            shape,
            layers: vec![LayerKv::default(); shape.n_layers],
            len: 0,
        })
    }

    pub fn shape(&self) -> CacheShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.shape.capacity
    }

    /// Positions still available before the capacity limit.
    pub fn remaining(&self) -> usize {
        self.shape.capacity - self.len
    }

    /// Drops every position at or beyond `new_len`. Retained positions are
    /// untouched.
    pub fn truncate(&mut self, new_len: usize) -> Result<(), CacheError> {
        if new_len > self.len {
            return Err(CacheError::TruncateBeyondLength {
                requested: new_len,
                len: self.len,
            });
        }
        let keep = new_len * self.shape.position_stride();
        for layer in &mut self.layers {
            layer.keys.truncate(keep);
            layer.values.truncate(keep);
        }
        self.len = new_len;
        Ok(())
    }

    pub fn clear(&mut self) {
        // Cannot fail: 0 <= len.
        let _ = self.truncate(0);
    }

    /// Keys of `layer` for all cached positions (plus any position currently
    /// being written), position-major.
    pub fn keys(&self, layer: usize) -> &[f32] {
        &self.layers[layer].keys
    }

    pub fn values(&self, layer: usize) -> &[f32] {
        &self.layers[layer].values
    }

    /// The `head_dim` key floats for one `(layer, head, pos)` triple.
    pub fn key(&self, layer: usize, head: usize, pos: usize) -> &[f32] {
        let off = self.offset(head, pos);
        &self.layers[layer].keys[off..off + self.shape.head_dim]
    }

    pub fn value(&self, layer: usize, head: usize, pos: usize) -> &[f32] {
        let off = self.offset(head, pos);
        &self.layers[layer].values[off..off + self.shape.head_dim]
    }

    fn offset(&self, head: usize, pos: usize) -> usize {
        (pos * self.shape.n_heads + head) * self.shape.head_dim
    }

    /// Fails unless `extra` more positions fit.
    pub fn ensure_room(&self, extra: usize) -> Result<(), CacheError> {
        if self.len + extra > self.shape.capacity {
            return Err(CacheError::CapacityExceeded {
                capacity: self.shape.capacity,
            });
        }
        Ok(())
    }

    /// Writes key/value rows for the next position of one layer. The position
    /// only becomes part of `len()` once [`KvCache::commit_position`] runs, so
    /// a model writes every layer and then commits.
    pub fn write_next(&mut self, layer: usize, keys: &[f32], values: &[f32]) {
        let stride = self.shape.position_stride();
        debug_assert_eq!(keys.len(), stride);
        debug_assert_eq!(values.len(), stride);
        let entry = &mut self.layers[layer];
        debug_assert_eq!(entry.keys.len(), self.len * stride, "layer written twice");
        entry.keys.extend_from_slice(keys);
        entry.values.extend_from_slice(values);
    }

    /// Marks the position written by [`KvCache::write_next`] as cached.
    pub fn commit_position(&mut self) -> Result<(), CacheError> {
        self.ensure_room(1)?;
        let expected = (self.len + 1) * self.shape.position_stride();
        debug_assert!(self
            .layers
            .iter()
            .all(|l| l.keys.len() == expected && l.values.len() == expected));
        self.len += 1;
        Ok(())
    }

    /// Shapes, lengths and every stored element agree within `tol`.
    pub fn approx_eq(&self, other: &KvCache, tol: f32) -> bool {
        if self.shape != other.shape || self.len != other.len {
            return false;
        }
        let close = |a: &[f32], b: &[f32]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
        };
        self.layers
            .iter()
            .zip(&other.layers)
            .all(|(a, b)| close(&a.keys, &b.keys) && close(&a.values, &b.values))
    }

    /// Bit-level equality of every cached element.
    pub fn bit_eq(&self, other: &KvCache) -> bool {
        if self.shape != other.shape || self.len != other.len {
            return false;
        }
        let same = |a: &[f32], b: &[f32]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        self.layers
            .iter()
            .zip(&other.layers)
            .all(|(a, b)| same(&a.keys, &b.keys) && same(&a.values, &b.values))
    }
}
