//! Betti priors: target Betti vectors for single classes and unions of
//! classes.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Sorted, 1-based foreground class indices.
pub type Subset = Vec<usize>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BettiPrior {
    ndim: usize,
    class_names: Vec<String>,
    entries: BTreeMap<Subset, Vec<u32>>,
}

fn parse_err(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::PriorParse {
        key: key.into(),
        reason: reason.into(),
    }
}

impl BettiPrior {
    /// `class_names[0]` is the background.
    pub fn new(ndim: usize, class_names: Vec<String>, entries: BTreeMap<Subset, Vec<u32>>) -> Result<Self> {
        if !(2..=3).contains(&ndim) {
            return Err(Error::invalid(format!("prior dims must be 2 or 3, got {ndim}")));
        }
        if class_names.len() < 2 {
            return Err(Error::invalid("a prior needs a background and at least one class"));
        }
        let k = class_names.len();
        for (subset, betti) in &entries {
            if subset.is_empty() || subset.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("subset {subset:?} must be sorted and distinct")));
            }
            if subset.iter().any(|&c| c < 2 || c > k) {
                return Err(Error::invalid(format!(
                    "subset {subset:?} must name foreground classes 2..={k}"
                )));
            }
            if betti.len() != ndim {
                return Err(Error::invalid(format!(
                    "subset {subset:?} has {} Betti numbers, expected {ndim}",
                    betti.len()
                )));
            }
        }
        Ok(Self {
            ndim,
            class_names,
            entries,
        })
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// 1-based index of a class name.
    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name).map(|i| i + 1)
    }

    pub fn entries(&self) -> &BTreeMap<Subset, Vec<u32>> {
        &self.entries
    }

    /// Target vector of a subset, in any class order.
    pub fn get(&self, subset: &[usize]) -> Option<&[u32]> {
        let mut key = subset.to_vec();
        key.sort_unstable();
        self.entries.get(&key).map(Vec::as_slice)
    }

    /// `|`-joined class names, e.g. `rv|my`.
    pub fn subset_name(&self, subset: &[usize]) -> String {
        subset
            .iter()
            .map(|&c| self.class_names[c - 1].as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Entries the loss uses: singletons and pairs.
    pub fn loss_subsets(&self) -> Vec<(&Subset, &[u32])> {
        self.entries
            .iter()
            .filter(|(s, _)| s.len() <= 2)
            .map(|(s, b)| (s, b.as_slice()))
            .collect()
    }

    /// Copy without multi-class entries: the per-class baseline loss.
    pub fn singletons_only(&self) -> Self {
        Self {
            ndim: self.ndim,
            class_names: self.class_names.clone(),
            entries: self
                .entries
                .iter()
                .filter(|(s, _)| s.len() == 1)
                .map(|(s, b)| (s.clone(), b.clone()))
                .collect(),
        }
    }

    /// Every subset of size `1..=max_size` over the foreground classes.
    pub fn all_subsets(&self, max_size: usize) -> Vec<Subset> {
        let fg: Vec<usize> = (2..=self.num_classes()).collect();
        let mut out = Vec::new();
        let mut stack: Vec<(Subset, usize)> = vec![(Vec::new(), 0)];
        while let Some((cur, start)) = stack.pop() {
            if !cur.is_empty() {
                out.push(cur.clone());
            }
            if cur.len() == max_size {
                continue;
            }
            for i in start..fg.len() {
                let mut next = cur.clone();
                next.push(fg[i]);
                stack.push((next, i + 1));
            }
        }
        out.sort();
        out
    }

    /// Subsets the evaluation requires: singletons and pairs, plus triples
    /// in 3D.
    pub fn evaluation_subsets(&self) -> Vec<Subset> {
        self.all_subsets(if self.ndim == 3 { 3 } else { 2 })
    }

    pub fn to_json(&self) -> Value {
        let betti: Map<String, Value> = self
            .entries
            .iter()
            .map(|(s, b)| (self.subset_name(s), json!(b)))
            .collect();
        json!({
            "dims": self.ndim,
            "classes": self.class_names,
            "betti": betti,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| parse_err("<document>", e.to_string()))?;
        let obj = doc.as_object().ok_or_else(|| parse_err("<document>", "expected an object"))?;
        let ndim = obj
            .get("dims")
            .and_then(Value::as_u64)
            .ok_or_else(|| parse_err("dims", "missing or not a non-negative integer"))? as usize;
        if !(2..=3).contains(&ndim) {
            return Err(parse_err("dims", format!("must be 2 or 3, got {ndim}")));
        }
        let classes = obj
            .get("classes")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err("classes", "missing or not an array"))?;
        let mut class_names = Vec::with_capacity(classes.len());
        for (i, c) in classes.iter().enumerate() {
            let name = c
                .as_str()
                .filter(|s| !s.is_empty() && !s.contains('|'))
                .ok_or_else(|| parse_err(format!("classes[{i}]"), "expected a non-empty name without '|'"))?;
            if class_names.iter().any(|n| n == name) {
                return Err(parse_err(format!("classes[{i}]"), format!("duplicate class `{name}`")));
            }
            class_names.push(name.to_string());
        }
        if class_names.len() < 2 {
            return Err(parse_err("classes", "need a background and at least one class"));
        }
        let betti = obj
            .get("betti")
            .and_then(Value::as_object)
            .ok_or_else(|| parse_err("betti", "missing or not an object"))?;
        let mut entries = BTreeMap::new();
        for (key, value) in betti {
            let mut subset = Vec::new();
            for part in key.split('|') {
                let idx = class_names
                    .iter()
                    .position(|n| n == part)
                    .ok_or_else(|| parse_err(key, format!("unknown class `{part}`")))?;
                if idx == 0 {
                    return Err(parse_err(key, "the background class cannot appear in a subset"));
                }
                subset.push(idx + 1);
            }
            subset.sort_unstable();
            if subset.windows(2).any(|w| w[0] == w[1]) {
                return Err(parse_err(key, "class repeated"));
            }
            let arr = value
                .as_array()
                .ok_or_else(|| parse_err(key, "expected an array of Betti numbers"))?;
            if arr.len() != ndim {
                return Err(parse_err(key, format!("expected {ndim} Betti numbers, got {}", arr.len())));
            }
            let vec = arr
                .iter()
                .map(|v| v.as_u64().and_then(|b| u32::try_from(b).ok()))
                .collect::<Option<Vec<u32>>>()
                .ok_or_else(|| parse_err(key, "Betti numbers must be non-negative integers"))?;
            if entries.insert(subset, vec).is_some() {
                return Err(parse_err(key, "subset given twice"));
            }
        }
        Self::new(ndim, class_names, entries)
    }

    fn from_named(ndim: usize, classes: &[&str], betti: &[(&str, &[u32])]) -> Self {
        let mut text = Map::new();
        for (k, v) in betti {
            text.insert(k.to_string(), json!(v));
        }
        let doc = json!({ "dims": ndim, "classes": classes, "betti": text });
        Self::from_json(&doc.to_string()).expect("built-in prior is valid")
    }

    /// Short-axis cardiac prior with classes `bg, rv, my, lv`.
    pub fn short_axis_2d() -> Self {
        Self::from_named(
            2,
            &["bg", "rv", "my", "lv"],
            &[
                ("rv", &[1, 0]),
                ("my", &[1, 1]),
                ("lv", &[1, 0]),
                ("rv|my", &[1, 1]),
                ("rv|lv", &[2, 0]),
                ("my|lv", &[1, 0]),
            ],
        )
    }

    /// Whole-heart prior with classes `bg, my, la, lv, ra, rv`, including the
    /// triples used for evaluation.
    pub fn whole_heart_3d() -> Self {
        let one: &[u32] = &[1, 0, 0];
        let two: &[u32] = &[2, 0, 0];
        Self::from_named(
            3,
            &["bg", "my", "la", "lv", "ra", "rv"],
            &[
                ("my", one),
                ("la", one),
                ("lv", one),
                ("ra", one),
                ("rv", one),
                ("my|la", one),
                ("my|lv", one),
                ("my|ra", one),
                ("my|rv", one),
                ("la|lv", one),
                ("la|ra", two),
                ("la|rv", two),
                ("lv|ra", two),
                ("lv|rv", two),
                ("ra|rv", one),
                ("my|la|lv", one),
                ("my|la|ra", one),
                ("my|la|rv", one),
                ("my|lv|ra", one),
                ("my|lv|rv", one),
                ("my|ra|rv", one),
                ("la|lv|ra", two),
                ("la|lv|rv", two),
                ("la|ra|rv", two),
                ("lv|ra|rv", two),
            ],
        )
    }
}
