//! Maps company-specific product exports onto the FIC data model.
//!
//! A [`MappingTable`] assigns each external column (CSV header or JSON key)
//! to a field path of [`ProductRecord`]. Parsing never aborts on a bad cell:
//! the cell is left missing and a [`RowIssue`] is recorded instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::model::{Allergen, BasisUnit, NetContent, Nutrient, ProductRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("mapping file is not valid: {0}")]
    MappingSyntax(#[from] serde_json::Error),
    #[error("mapping entry `{external}` targets unknown field `{target}`")]
    UnknownTarget { external: String, target: String },
    #[error("mapping entry `{external}` uses unit `{unit}` which does not fit target `{target}`")]
    IncompatibleUnit { external: String, target: String, unit: String },
    #[error("mapping entry `{external}` declares unit `{unit}` for `{target}`, conflicting with `{other}`")]
    ConflictingEntry { external: String, target: String, unit: String, other: String },
    #[error("mapping lists `{0}` more than once")]
    DuplicateEntry(String),
    #[error("mapping alias `{alias}` -> `{value}` in `{external}` is not a known allergen")]
    InvalidAlias { external: String, alias: String, value: String },
    #[error("no input column matches the mapping")]
    NoMappableColumn,
}

/// Target inside the FIC data model addressed by a mapping entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldPath {
    Gtin,
    Name,
    Brand,
    ProductGroup,
    NetContentValue,
    NetContentUnit,
    Portions,
    Nutrient(Nutrient),
    EnergyKj,
    EnergyKcal,
    Basis,
    /// Multi-valued allergen list, e.g. "Milk, Eggs".
    Allergens,
    /// One boolean column per allergen.
    AllergenFlag(Allergen),
    Ingredients,
    Vitamin(String),
    Mineral(String),
    Warning(String),
}

impl FieldPath {
    pub fn parse(path: &str) -> Option<FieldPath> {
        let path = path.trim();
        let simple = match path {
            "gtin" => Some(FieldPath::Gtin),
            "name" => Some(FieldPath::Name),
            "brand" => Some(FieldPath::Brand),
            "product_group" => Some(FieldPath::ProductGroup),
            "net_content.value" => Some(FieldPath::NetContentValue),
            "net_content.unit" => Some(FieldPath::NetContentUnit),
            "portions" => Some(FieldPath::Portions),
            "nutrients.energy_kj" => Some(FieldPath::EnergyKj),
            "nutrients.energy_kcal" => Some(FieldPath::EnergyKcal),
            "nutrients.basis" => Some(FieldPath::Basis),
            "allergens" => Some(FieldPath::Allergens),
            "ingredients" => Some(FieldPath::Ingredients),
            _ => None,
        };
        if simple.is_some() {
            return simple;
        }
        let (area, key) = path.split_once('.')?;
        if key.is_empty() {
            return None;
        }
        match area {
            "nutrients" => Nutrient::ALL
                .iter()
                .find(|n| n.code() == key)
                .map(|n| FieldPath::Nutrient(*n)),
            "allergens" => Allergen::ALL
                .iter()
                .find(|a| a.name() == key)
                .map(|a| FieldPath::AllergenFlag(*a)),
            "vitamins" => Some(FieldPath::Vitamin(key.to_string())),
            "minerals" => Some(FieldPath::Mineral(key.to_string())),
            "warnings" => Some(FieldPath::Warning(key.to_string())),
            _ => None,
        }
    }

    fn default_unit(&self) -> Option<UnitTag> {
        match self {
            FieldPath::Nutrient(_) => Some(UnitTag::Gram),
            FieldPath::EnergyKj => Some(UnitTag::Kilojoule),
            FieldPath::EnergyKcal => Some(UnitTag::Kilocalorie),
            _ => None,
        }
    }

    fn accepts(&self, unit: UnitTag) -> bool {
        match self {
            FieldPath::Nutrient(_) => unit.gram_factor().is_some(),
            FieldPath::EnergyKj => unit == UnitTag::Kilojoule,
            FieldPath::EnergyKcal => unit == UnitTag::Kilocalorie,
            _ => false,
        }
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldPath::Gtin => f.write_str("gtin"),
            FieldPath::Name => f.write_str("name"),
            FieldPath::Brand => f.write_str("brand"),
            FieldPath::ProductGroup => f.write_str("product_group"),
            FieldPath::NetContentValue => f.write_str("net_content.value"),
            FieldPath::NetContentUnit => f.write_str("net_content.unit"),
            FieldPath::Portions => f.write_str("portions"),
            FieldPath::Nutrient(n) => write!(f, "nutrients.{}", n.code()),
            FieldPath::EnergyKj => f.write_str("nutrients.energy_kj"),
            FieldPath::EnergyKcal => f.write_str("nutrients.energy_kcal"),
            FieldPath::Basis => f.write_str("nutrients.basis"),
            FieldPath::Allergens => f.write_str("allergens"),
            FieldPath::AllergenFlag(a) => write!(f, "allergens.{}", a.name()),
            FieldPath::Ingredients => f.write_str("ingredients"),
            FieldPath::Vitamin(k) => write!(f, "vitamins.{k}"),
            FieldPath::Mineral(k) => write!(f, "minerals.{k}"),
            FieldPath::Warning(k) => write!(f, "warnings.{k}"),
        }
    }
}

/// Unit conversion tag on a numeric mapping entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitTag {
    Gram,
    Milligram,
    Microgram,
    Kilojoule,
    Kilocalorie,
}

impl UnitTag {
    fn parse(s: &str) -> Option<UnitTag> {
        match s.trim().to_lowercase().as_str() {
            "g" => Some(UnitTag::Gram),
            "mg" => Some(UnitTag::Milligram),
            "ug" | "µg" | "mcg" => Some(UnitTag::Microgram),
            "kj" => Some(UnitTag::Kilojoule),
            "kcal" => Some(UnitTag::Kilocalorie),
            _ => None,
        }
    }

    fn gram_factor(self) -> Option<f64> {
        match self {
            UnitTag::Gram => Some(1.0),
            UnitTag::Milligram => Some(1e-3),
            UnitTag::Microgram => Some(1e-6),
            _ => None,
        }
    }

    fn to_canonical(self, value: f64) -> f64 {
        match self.gram_factor() {
            Some(f) => value * f,
            None => value,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            UnitTag::Gram => "g",
            UnitTag::Milligram => "mg",
            UnitTag::Microgram => "ug",
            UnitTag::Kilojoule => "kJ",
            UnitTag::Kilocalorie => "kcal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingEntry {
    pub target: FieldPath,
    pub unit: Option<UnitTag>,
    /// Lower-cased raw value -> replacement value. An empty replacement
    /// drops the value.
    pub aliases: BTreeMap<String, String>,
}

impl MappingEntry {
    fn alias<'a>(&'a self, raw: &'a str) -> &'a str {
        self.aliases
            .get(&raw.trim().to_lowercase())
            .map(String::as_str)
            .unwrap_or(raw)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Short(String),
    Full {
        target: String,
        #[serde(default)]
        unit: Option<String>,
        #[serde(default)]
        aliases: BTreeMap<String, String>,
    },
}

/// JSON object entries in document order, duplicates kept.
struct RawMapping(Vec<(String, RawEntry)>);

impl<'de> Deserialize<'de> for RawMapping {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = RawMapping;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object of external column names")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<RawMapping, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, RawEntry>()? {
                    entries.push((k, v));
                }
                Ok(RawMapping(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

/// Validated mapping from external attribute names to FIC model fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MappingTable {
    entries: BTreeMap<String, MappingEntry>,
}

impl MappingTable {
    pub fn from_json(text: &str) -> Result<MappingTable, IngestError> {
        let raw: RawMapping = serde_json::from_str(text)?;
        let mut table = MappingTable::default();
        for (external, entry) in raw.0 {
            let (target, unit, aliases) = match entry {
                RawEntry::Short(t) => (t, None, BTreeMap::new()),
                RawEntry::Full { target, unit, aliases } => (target, unit, aliases),
            };
            table.insert(&external, &target, unit.as_deref(), aliases)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<MappingTable, IngestError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn insert(
        &mut self,
        external: &str,
        target: &str,
        unit: Option<&str>,
        aliases: BTreeMap<String, String>,
    ) -> Result<(), IngestError> {
        if self.entries.contains_key(external) {
            return Err(IngestError::DuplicateEntry(external.to_string()));
        }
        let path = FieldPath::parse(target).ok_or_else(|| IngestError::UnknownTarget {
            external: external.to_string(),
            target: target.to_string(),
        })?;
        let unit = match unit {
            None => None,
            Some(u) => {
                let tag = UnitTag::parse(u).filter(|t| path.accepts(*t));
                Some(tag.ok_or_else(|| IngestError::IncompatibleUnit {
                    external: external.to_string(),
                    target: target.to_string(),
                    unit: u.to_string(),
                })?)
            }
        };
        let effective = unit.or(path.default_unit());
        for (other_name, other) in &self.entries {
            if other.target == path && other.unit.or(path.default_unit()) != effective {
                let show = |u: Option<UnitTag>| u.map(UnitTag::as_str).unwrap_or("none").to_string();
                return Err(IngestError::ConflictingEntry {
                    external: external.to_string(),
                    target: path.to_string(),
                    unit: show(effective),
                    other: format!("{other_name} ({})", show(other.unit.or(path.default_unit()))),
                });
            }
        }
        let aliases: BTreeMap<String, String> = aliases
            .into_iter()
            .map(|(k, v)| (k.trim().to_lowercase(), v.trim().to_string()))
            .collect();
        if matches!(path, FieldPath::Allergens) {
            for (alias, value) in &aliases {
                if !value.is_empty() && value.parse::<Allergen>().is_err() {
                    return Err(IngestError::InvalidAlias {
                        external: external.to_string(),
                        alias: alias.clone(),
                        value: value.clone(),
                    });
                }
            }
        }
        self.entries.insert(
            external.to_string(),
            MappingEntry { target: path, unit, aliases },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, external: &str) -> Option<&MappingEntry> {
        self.entries.get(external)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &MappingEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn maps_basis(&self) -> bool {
        self.entries.values().any(|e| e.target == FieldPath::Basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum IssueReason {
    NonNumeric(String),
    Negative(String),
    NotAnInteger(String),
    UnknownAllergen(String),
    InvalidFlag(String),
    InvalidBasis(String),
    ConflictingValue(String),
    MissingGtin,
    MalformedLine(String),
}

impl fmt::Display for IssueReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IssueReason::NonNumeric(v) => write!(f, "non-numeric value `{v}`"),
            IssueReason::Negative(v) => write!(f, "negative quantity `{v}`"),
            IssueReason::NotAnInteger(v) => write!(f, "not a non-negative integer `{v}`"),
            IssueReason::UnknownAllergen(v) => write!(f, "unknown allergen `{v}`"),
            IssueReason::InvalidFlag(v) => write!(f, "not a yes/no flag `{v}`"),
            IssueReason::InvalidBasis(v) => write!(f, "unknown basis unit `{v}`"),
            IssueReason::ConflictingValue(v) => write!(f, "conflicts with earlier column value `{v}`"),
            IssueReason::MissingGtin => f.write_str("missing GTIN"),
            IssueReason::MalformedLine(e) => write!(f, "malformed line: {e}"),
        }
    }
}

/// A cell-level problem. `row` is the 1-based data row (CSV) or line (JSON-lines).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowIssue {
    pub row: usize,
    pub field: String,
    pub reason: IssueReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv { delimiter: u8 },
    JsonLines,
}

impl InputFormat {
    /// `.jsonl`/`.ndjson` are read as JSON-lines, `.tsv` as tab-separated,
    /// anything else as comma-separated CSV.
    pub fn from_path(path: &Path) -> InputFormat {
        match path.extension().and_then(|e| e.to_str()).map(str::to_lowercase).as_deref() {
            Some("jsonl") | Some("ndjson") => InputFormat::JsonLines,
            Some("tsv") => InputFormat::Csv { delimiter: b'\t' },
            _ => InputFormat::Csv { delimiter: b',' },
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub records: Vec<ProductRecord>,
    pub issues: Vec<RowIssue>,
    /// Input columns without a mapping entry, sorted.
    pub ignored_columns: Vec<String>,
}

pub fn parse_products_file(
    path: &Path,
    format: InputFormat,
    mapping: &MappingTable,
) -> Result<IngestOutput, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_products(file, format, mapping)
}

pub fn parse_products<R: Read>(
    input: R,
    format: InputFormat,
    mapping: &MappingTable,
) -> Result<IngestOutput, IngestError> {
    if !mapping.maps_basis() {
        log::warn!("mapping has no `nutrients.basis` column; assuming per_100g for every product");
    }
    match format {
        InputFormat::Csv { delimiter } => parse_csv(input, delimiter, mapping),
        InputFormat::JsonLines => parse_json_lines(input, mapping),
    }
}

fn parse_csv<R: Read>(input: R, delimiter: u8, mapping: &MappingTable) -> Result<IngestOutput, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(input);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim().to_string())
        .collect();

    let mut columns = Vec::new();
    let mut ignored = BTreeSet::new();
    for (i, h) in headers.iter().enumerate() {
        match mapping.get(h) {
            Some(entry) => columns.push((i, h.as_str(), entry)),
            None => {
                ignored.insert(h.clone());
            }
        }
    }
    if columns.is_empty() {
        return Err(IngestError::NoMappableColumn);
    }

    let mut out = IngestOutput::default();
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = n + 1;
        let mut builder = RecordBuilder::new(row_no);
        for &(i, name, entry) in &columns {
            if let Some(cell) = row.get(i) {
                builder.apply(name, entry, Cell::Text(cell.to_string()));
            }
        }
        let (record, issues) = builder.finish();
        out.records.push(record);
        out.issues.extend(issues);
    }
    out.ignored_columns = ignored.into_iter().collect();
    Ok(out)
}

fn parse_json_lines<R: Read>(input: R, mapping: &MappingTable) -> Result<IngestOutput, IngestError> {
    let mut out = IngestOutput::default();
    let mut ignored = BTreeSet::new();
    let mut mapped_any = false;
    let mut saw_object = false;

    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let row_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let object = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(map)) => map,
            Ok(_) => {
                out.issues.push(RowIssue {
                    row: row_no,
                    field: String::new(),
                    reason: IssueReason::MalformedLine("expected a JSON object".into()),
                });
                continue;
            }
            Err(e) => {
                out.issues.push(RowIssue {
                    row: row_no,
                    field: String::new(),
                    reason: IssueReason::MalformedLine(e.to_string()),
                });
                continue;
            }
        };
        saw_object = true;
        let mut builder = RecordBuilder::new(row_no);
        // Iterate mapping order so that "first column wins" is stable.
        for (name, entry) in mapping.entries() {
            if let Some(value) = object.get(name) {
                mapped_any = true;
                builder.apply(name, entry, Cell::from_json(value));
            }
        }
        for key in object.keys() {
            if mapping.get(key).is_none() {
                ignored.insert(key.clone());
            }
        }
        let (record, issues) = builder.finish();
        out.records.push(record);
        out.issues.extend(issues);
    }
    if saw_object && !mapped_any {
        return Err(IngestError::NoMappableColumn);
    }
    out.ignored_columns = ignored.into_iter().collect();
    Ok(out)
}

enum Cell {
    Missing,
    Text(String),
    List(Vec<String>),
}

impl Cell {
    fn from_json(value: &serde_json::Value) -> Cell {
        use serde_json::Value;
        match value {
            Value::Null => Cell::Missing,
            Value::String(s) => Cell::Text(s.clone()),
            Value::Number(n) => Cell::Text(n.to_string()),
            Value::Bool(b) => Cell::Text(b.to_string()),
            Value::Array(items) => Cell::List(
                items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect(),
            ),
            Value::Object(_) => Cell::Text(value.to_string()),
        }
    }
}

fn parse_number(raw: &str) -> Result<f64, IssueReason> {
    let s = raw.trim();
    // Decimal comma is common in European exports.
    let normalized = if s.contains(',') && !s.contains('.') {
        s.replace(',', ".")
    } else {
        s.to_string()
    };
    match normalized.parse::<f64>() {
        Ok(v) if !v.is_finite() => Err(IssueReason::NonNumeric(raw.to_string())),
        Ok(v) if v < 0.0 => Err(IssueReason::Negative(raw.to_string())),
        Ok(v) => Ok(v),
        Err(_) => Err(IssueReason::NonNumeric(raw.to_string())),
    }
}

fn parse_flag(raw: &str) -> Result<bool, IssueReason> {
    match raw.trim().to_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "x" | "ja" | "j" => Ok(true),
        "0" | "false" | "no" | "n" | "nein" | "-" => Ok(false),
        _ => Err(IssueReason::InvalidFlag(raw.to_string())),
    }
}

struct RecordBuilder {
    row: usize,
    record: ProductRecord,
    issues: Vec<RowIssue>,
    filled: BTreeSet<FieldPath>,
}

impl RecordBuilder {
    fn new(row: usize) -> Self {
        RecordBuilder {
            row,
            record: ProductRecord::new(String::new()),
            issues: Vec::new(),
            filled: BTreeSet::new(),
        }
    }

    fn issue(&mut self, field: &str, reason: IssueReason) {
        self.issues.push(RowIssue { row: self.row, field: field.to_string(), reason });
    }

    /// Records the first non-missing value per target; returns false when
    /// the target was already filled by an earlier column.
    fn claim(&mut self, target: &FieldPath) -> bool {
        self.filled.insert(target.clone())
    }

    fn apply(&mut self, column: &str, entry: &MappingEntry, cell: Cell) {
        let text = match cell {
            Cell::Missing => return,
            Cell::List(items) => {
                if entry.target == FieldPath::Allergens {
                    for item in items {
                        self.add_allergen(column, entry, &item);
                    }
                    return;
                }
                items.join(", ")
            }
            Cell::Text(t) => t,
        };
        if text.trim().is_empty() {
            return;
        }
        let value = entry.alias(&text).to_string();
        let value = value.trim();
        match &entry.target {
            FieldPath::Allergens => {
                for item in text.split([',', ';', '|']) {
                    if !item.trim().is_empty() {
                        self.add_allergen(column, entry, item);
                    }
                }
            }
            FieldPath::AllergenFlag(a) => match parse_flag(value) {
                Ok(true) => self.record.declared_allergens.insert(*a),
                Ok(false) => {}
                Err(reason) => self.issue(column, reason),
            },
            FieldPath::Nutrient(_) | FieldPath::EnergyKj | FieldPath::EnergyKcal => {
                let number = match parse_number(value) {
                    Ok(v) => v,
                    Err(reason) => return self.issue(column, reason),
                };
                let unit = entry.unit.or(entry.target.default_unit());
                let number = unit.map(|u| u.to_canonical(number)).unwrap_or(number);
                let existing = match &entry.target {
                    FieldPath::Nutrient(n) => self.record.nutrients.get(*n),
                    FieldPath::EnergyKj => self.record.nutrients.energy_kj,
                    _ => self.record.nutrients.energy_kcal,
                };
                if !self.claim(&entry.target) {
                    if existing != Some(number) {
                        self.issue(column, IssueReason::ConflictingValue(value.to_string()));
                    }
                    return;
                }
                // Parsed values are finite and non-negative, so the setters cannot fail.
                let _ = match &entry.target {
                    FieldPath::Nutrient(n) => self.record.nutrients.set(*n, number),
                    FieldPath::EnergyKj => self.record.nutrients.set_energy_kj(number),
                    _ => self.record.nutrients.set_energy_kcal(number),
                };
            }
            FieldPath::Basis => match value.parse::<BasisUnit>() {
                Ok(b) => {
                    if self.claim(&entry.target) {
                        self.record.nutrients.basis = b;
                    }
                }
                Err(_) => self.issue(column, IssueReason::InvalidBasis(value.to_string())),
            },
            FieldPath::NetContentValue => match parse_number(value) {
                Ok(v) => {
                    if self.claim(&entry.target) {
                        self.net_content().value = Some(v);
                    }
                }
                Err(reason) => self.issue(column, reason),
            },
            FieldPath::NetContentUnit => {
                if self.claim(&entry.target) {
                    self.net_content().unit = Some(value.to_string());
                }
            }
            FieldPath::Portions => match parse_number(value) {
                Ok(v) if v.fract() == 0.0 && v <= u32::MAX as f64 => {
                    if self.claim(&entry.target) {
                        self.record.portions = Some(v as u32);
                    }
                }
                _ => self.issue(column, IssueReason::NotAnInteger(value.to_string())),
            },
            target @ (FieldPath::Gtin
            | FieldPath::Name
            | FieldPath::Brand
            | FieldPath::ProductGroup
            | FieldPath::Ingredients) => {
                if !self.claim(target) {
                    return;
                }
                let slot = match target {
                    FieldPath::Gtin => &mut self.record.gtin,
                    FieldPath::Name => &mut self.record.name,
                    FieldPath::Brand => &mut self.record.brand,
                    FieldPath::ProductGroup => &mut self.record.product_group,
                    _ => &mut self.record.ingredients_raw,
                };
                // Ingredient text keeps its original spacing and case.
                *slot = if matches!(target, FieldPath::Ingredients) {
                    text.clone()
                } else {
                    value.to_string()
                };
            }
            FieldPath::Vitamin(k) => {
                self.record.vitamins.insert(k.clone(), value.to_string());
            }
            FieldPath::Mineral(k) => {
                self.record.minerals.insert(k.clone(), value.to_string());
            }
            FieldPath::Warning(k) => {
                self.record.warnings.insert(k.clone(), value.to_string());
            }
        }
    }

    fn add_allergen(&mut self, column: &str, entry: &MappingEntry, item: &str) {
        let resolved = entry.alias(item).trim().to_string();
        if resolved.is_empty() {
            return;
        }
        match resolved.parse::<Allergen>() {
            Ok(a) => self.record.declared_allergens.insert(a),
            Err(_) => self.issue(column, IssueReason::UnknownAllergen(item.trim().to_string())),
        }
    }

    fn net_content(&mut self) -> &mut NetContent {
        self.record
            .net_content
            .get_or_insert(NetContent { value: None, unit: None })
    }

    fn finish(mut self) -> (ProductRecord, Vec<RowIssue>) {
        if self.record.gtin.trim().is_empty() {
            // Keep the record so row counts stay aligned; give it a stable
            // placeholder identity.
            self.record.gtin = format!("row-{}", self.row);
            self.issue("gtin", IssueReason::MissingGtin);
        }
        (self.record, self.issues)
    }
}
