//! Tabular data over a schema of discretized attributes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::DataVector;

/// How an attribute's values map to bins. Range bins are half-open
/// `[lo, hi)` except the last, which also includes `hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Binning {
    Categorical { values: Vec<String> },
    Range { lo: f64, hi: f64, bins: usize },
}

impl Binning {
    pub fn size(&self) -> usize {
        match self {
            Binning::Categorical { values } => values.len(),
            Binning::Range { bins, .. } => *bins,
        }
    }

    pub fn bin(&self, v: &Value) -> Option<usize> {
        match (self, v) {
            (Binning::Categorical { values }, Value::Text(s)) => values.iter().position(|c| c == s),
            (Binning::Categorical { values }, Value::Num(x)) => {
                values.iter().position(|c| c.parse::<f64>().is_ok_and(|p| p == *x))
            }
            (Binning::Range { lo, hi, bins }, Value::Num(x)) => {
                if !(x >= lo && x <= hi) {
                    return None;
                }
                if x == hi {
                    return Some(bins - 1);
                }
                let b = ((x - lo) / (hi - lo) * *bins as f64) as usize;
                Some(b.min(bins - 1))
            }
            (Binning::Range { .. }, Value::Text(_)) => None,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        match self {
            Binning::Categorical { values } if values.is_empty() => {
                Err(Error::Config(format!("attribute `{name}` has no categories")))
            }
            Binning::Range { lo, hi, bins } if *bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(Error::Config(format!("attribute `{name}` has an invalid range")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub binning: Binning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Config("schema has no attributes".into()));
        }
        for (i, a) in attributes.iter().enumerate() {
            a.binning.validate(&a.name)?;
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Config(format!("duplicate attribute `{}`", a.name)));
            }
        }
        Ok(Schema { attributes })
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn domain_shape(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.binning.size()).collect()
    }

    pub fn domain_size(&self) -> usize {
        self.domain_shape().iter().product()
    }

    /// Row-major cell index of a row.
    pub fn cell_of(&self, row: &[Value]) -> core::result::Result<usize, String> {
        if row.len() != self.attributes.len() {
            return Err(format!("expected {} fields, found {}", self.attributes.len(), row.len()));
        }
        let mut idx = 0usize;
        for (a, v) in self.attributes.iter().zip(row) {
            let b = a
                .binning
                .bin(v)
                .ok_or_else(|| format!("value {v} is outside the domain of `{}`", a.name))?;
            idx = idx * a.binning.size() + b;
        }
        Ok(idx)
    }

    /// Parses a raw field according to the attribute's binning.
    pub fn parse_field(&self, attr: usize, raw: &str) -> core::result::Result<Value, String> {
        let a = &self.attributes[attr];
        match a.binning {
            Binning::Categorical { .. } => Ok(Value::Text(raw.trim().to_string())),
            Binning::Range { .. } => raw
                .trim()
                .parse::<f64>()
                .map(Value::Num)
                .map_err(|_| format!("`{raw}` is not a number for `{}`", a.name)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Text(String),
}

impl core::fmt::Display for Value {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum ValueKey {
    Num(u64),
    Text(String),
}

impl From<&Value> for ValueKey {
    fn from(v: &Value) -> Self {
        match v {
            Value::Num(x) => ValueKey::Num(if *x == 0.0 { 0 } else { x.to_bits() }),
            Value::Text(s) => ValueKey::Text(s.clone()),
        }
    }
}

/// Row-level filter: conjunctions of equality and inclusive range tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Predicate {
    True,
    False,
    Eq(String, Value),
    InRange(String, f64, f64),
    And(Vec<Predicate>),
}

impl Predicate {
    fn check(&self, schema: &Schema) -> Result<()> {
        match self {
            Predicate::True | Predicate::False => Ok(()),
            Predicate::Eq(a, _) | Predicate::InRange(a, _, _) => schema.index_of(a).map(|_| ()),
            Predicate::And(ps) => ps.iter().try_for_each(|p| p.check(schema)),
        }
    }

    fn eval(&self, schema: &Schema, row: &[Value]) -> bool {
        match self {
            Predicate::True => true,
            Predicate::False => false,
            Predicate::Eq(a, v) => schema.index_of(a).is_ok_and(|i| ValueKey::from(&row[i]) == ValueKey::from(v)),
            Predicate::InRange(a, lo, hi) => {
                schema.index_of(a).is_ok_and(|i| matches!(row[i], Value::Num(x) if x >= *lo && x <= *hi))
            }
            Predicate::And(ps) => ps.iter().all(|p| p.eval(schema, row)),
        }
    }
}

/// A bag of rows, each conforming to the schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    schema: Schema,
    rows: Vec<Vec<Value>>,
}

impl Table {
    /// Validates every row; the first row outside the schema's domain aborts
    /// with its index.
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            schema.cell_of(r).map_err(|message| Error::Ingestion { row: i, message })?;
        }
        Ok(Table { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Table { schema, rows: Vec::new() }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn filter(&self, p: &Predicate) -> Result<Table> {
        p.check(&self.schema)?;
        Ok(Table {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| p.eval(&self.schema, r)).cloned().collect(),
        })
    }

    /// Projection with bag semantics.
    pub fn project(&self, attrs: &[String]) -> Result<Table> {
        if attrs.is_empty() {
            return Err(Error::invalid("projection onto no attributes"));
        }
        let idx = attrs.iter().map(|a| self.schema.index_of(a)).collect::<Result<Vec<_>>>()?;
        let schema = Schema::new(idx.iter().map(|&i| self.schema.attributes[i].clone()).collect())?;
        let rows = self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
        Ok(Table { schema, rows })
    }

    /// One output row per distinct key, in order of first appearance,
    /// followed by a `count` column.
    pub fn group_by(&self, keys: &[String]) -> Result<Table> {
        if keys.is_empty() {
            return Err(Error::invalid("group by no attributes"));
        }
        let idx = keys.iter().map(|a| self.schema.index_of(a)).collect::<Result<Vec<_>>>()?;
        let mut attrs: Vec<Attribute> = idx.iter().map(|&i| self.schema.attributes[i].clone()).collect();
        if attrs.iter().any(|a| a.name == "count") {
            return Err(Error::Config("group key may not be named `count`".into()));
        }
        attrs.push(Attribute {
            name: "count".into(),
            binning: Binning::Range {
                lo: 0.0,
                hi: u32::MAX as f64,
                bins: 1,
            },
        });
        let schema = Schema::new(attrs)?;
        let mut order: Vec<Vec<Value>> = Vec::new();
        let mut counts: BTreeMap<Vec<ValueKey>, (usize, usize)> = BTreeMap::new();
        for r in &self.rows {
            let key: Vec<Value> = idx.iter().map(|&i| r[i].clone()).collect();
            let k: Vec<ValueKey> = key.iter().map(ValueKey::from).collect();
            let next = order.len();
            let e = counts.entry(k).or_insert((next, 0));
            if e.0 == next {
                order.push(key);
            }
            e.1 += 1;
        }
        let mut rows = order;
        for (pos, c) in counts.values() {
            rows[*pos].push(Value::Num(*c as f64));
        }
        Ok(Table { schema, rows })
    }

    /// Histogram over the schema's domain.
    pub fn vectorize(&self) -> Result<DataVector> {
        let mut x = vec![0.0; self.schema.domain_size()];
        for (i, r) in self.rows.iter().enumerate() {
            let c = self.schema.cell_of(r).map_err(|message| Error::Ingestion { row: i, message })?;
            x[c] += 1.0;
        }
        DataVector::new(x, self.schema.domain_shape())
    }

    /// Splits rows by the bin of `attr`. `groups` lists bin indices per
    /// output table and must partition the attribute's bins.
    pub fn split(&self, attr: &str, groups: &[Vec<usize>]) -> Result<Vec<Table>> {
        let a = self.schema.index_of(attr)?;
        let binning = &self.schema.attributes[a].binning;
        let mut owner = vec![usize::MAX; binning.size()];
        for (g, bins) in groups.iter().enumerate() {
            for &b in bins {
                if b >= owner.len() || owner[b] != usize::MAX {
                    return Err(Error::Partition(format!("bin {b} of `{attr}` is out of range or repeated")));
                }
                owner[b] = g;
            }
        }
        if owner.contains(&usize::MAX) {
            return Err(Error::Partition(format!("groups do not cover every bin of `{attr}`")));
        }
        let mut out: Vec<Table> = groups.iter().map(|_| Table::empty(self.schema.clone())).collect();
        for r in &self.rows {
            // rows were validated against the schema at construction
            let b = binning.bin(&r[a]).unwrap_or(0);
            out[owner[b]].rows.push(r.clone());
        }
        Ok(out)
    }
}
