//! Shared cache of guidance-field normalizers.

use std::collections::HashMap;
use std::sync::RwLock;

use intentfix_core::fixtures::{FieldParams, GuidanceField, SigmaReading};

type Key = ([u64; 3], [u64; 3], bool);

fn key(p: &FieldParams) -> Key {
    (
        p.sigma.map(f64::to_bits),
        p.d.map(f64::to_bits),
        p.reading == SigmaReading::InverseCovariance,
    )
}

/// `gf_max` per parameter set, computed once and shared across sessions.
#[derive(Debug, Default)]
pub struct FieldCache {
    inner: RwLock<HashMap<Key, Option<f64>>>,
}

impl FieldCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&self, params: FieldParams) -> intentfix_core::Result<GuidanceField> {
        let k = key(&params);
        if let Some(&g) = self.inner.read().expect("cache lock").get(&k) {
            return Ok(GuidanceField::with_gf_max(params, g));
        }
        let field = GuidanceField::new(params)?;
        self.inner.write().expect("cache lock").insert(k, field.gf_max);
        Ok(field)
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
