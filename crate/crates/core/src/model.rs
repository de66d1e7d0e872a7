//! FIC data model: nutrients, energy conversion table, daily reference
//! intakes, the 14 declarable allergens and the product record itself.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown nutrient code `{0}`")]
    UnknownNutrient(String),
    #[error("unknown allergen `{0}`")]
    UnknownAllergen(String),
    #[error("allergen index {0} out of range 0..14")]
    AllergenIndex(usize),
    #[error("quantity for {field} must be finite and >= 0, got {value}")]
    InvalidQuantity { field: String, value: f64 },
    #[error("unknown basis unit `{0}`")]
    UnknownBasis(String),
}

/// Nutrients tracked in the nutrient declaration. SFA/UFA are sub-components
/// of FAT, SUG/STA of CH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Nutrient {
    #[serde(rename = "CH")]
    Carbohydrate,
    #[serde(rename = "POL")]
    Polyols,
    #[serde(rename = "PRO")]
    Protein,
    #[serde(rename = "FAT")]
    Fat,
    #[serde(rename = "ALC")]
    Alcohol,
    #[serde(rename = "ORG_ACID")]
    OrganicAcid,
    #[serde(rename = "FIB")]
    Fibre,
    #[serde(rename = "SAL")]
    Salt,
    #[serde(rename = "SFA")]
    SaturatedFat,
    #[serde(rename = "UFA")]
    UnsaturatedFat,
    #[serde(rename = "SUG")]
    Sugar,
    #[serde(rename = "STA")]
    Starch,
}

impl Nutrient {
    pub const ALL: [Nutrient; 12] = [
        Nutrient::Carbohydrate,
        Nutrient::Polyols,
        Nutrient::Protein,
        Nutrient::Fat,
        Nutrient::Alcohol,
        Nutrient::OrganicAcid,
        Nutrient::Fibre,
        Nutrient::Salt,
        Nutrient::SaturatedFat,
        Nutrient::UnsaturatedFat,
        Nutrient::Sugar,
        Nutrient::Starch,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Nutrient::Carbohydrate => "CH",
            Nutrient::Polyols => "POL",
            Nutrient::Protein => "PRO",
            Nutrient::Fat => "FAT",
            Nutrient::Alcohol => "ALC",
            Nutrient::OrganicAcid => "ORG_ACID",
            Nutrient::Fibre => "FIB",
            Nutrient::Salt => "SAL",
            Nutrient::SaturatedFat => "SFA",
            Nutrient::UnsaturatedFat => "UFA",
            Nutrient::Sugar => "SUG",
            Nutrient::Starch => "STA",
        }
    }

    /// Energy conversion factors from Annex XIV. Sub-components carry none;
    /// their energy is already counted in the parent nutrient.
    pub fn energy_value(self) -> Option<EnergyValue> {
        let (kj, kcal) = match self {
            Nutrient::Carbohydrate => (17.0, 4.0),
            Nutrient::Polyols => (10.0, 2.4),
            Nutrient::Protein => (17.0, 4.0),
            Nutrient::Fat => (37.0, 9.0),
            Nutrient::Alcohol => (29.0, 7.0),
            Nutrient::OrganicAcid => (13.0, 3.0),
            Nutrient::Fibre => (8.0, 2.0),
            Nutrient::Salt => (0.0, 0.0),
            _ => return None,
        };
        Some(EnergyValue { kj, kcal })
    }
}

impl fmt::Display for Nutrient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Nutrient {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Nutrient::ALL
            .iter()
            .copied()
            .find(|n| n.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::UnknownNutrient(s.to_string()))
    }
}

/// Energy per gram of a basic nutrient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyValue {
    pub kj: f64,
    pub kcal: f64,
}

impl EnergyValue {
    /// kJ/kcal ratio implied by the table row; undefined for salt.
    pub fn implicit_factor(&self) -> Option<f64> {
        (self.kcal > 0.0).then(|| self.kj / self.kcal)
    }
}

/// The basic nutrients that carry an energy value, in table order.
pub fn energy_table() -> Vec<(Nutrient, EnergyValue)> {
    Nutrient::ALL
        .iter()
        .filter_map(|&n| n.energy_value().map(|ev| (n, ev)))
        .collect()
}

/// Physical kJ per kcal. Exposed for report annotations only; the
/// conversion check works with tolerance bounds instead.
pub const KJ_PER_KCAL: f64 = 4.1868;
/// kcal per kJ, 1 / 4.1868.
pub const KCAL_PER_KJ: f64 = 1.0 / KJ_PER_KCAL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntakeUnit {
    #[serde(rename = "kJ")]
    Kilojoule,
    #[serde(rename = "kcal")]
    Kilocalorie,
    #[serde(rename = "g")]
    Gram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntakeItem {
    Energy,
    Nutrient(Nutrient),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceIntake {
    pub item: IntakeItem,
    pub unit: IntakeUnit,
    pub value: f64,
}

/// Daily reference intakes of an average adult.
pub const REFERENCE_INTAKES: [ReferenceIntake; 8] = [
    ReferenceIntake { item: IntakeItem::Energy, unit: IntakeUnit::Kilojoule, value: 8400.0 },
    ReferenceIntake { item: IntakeItem::Energy, unit: IntakeUnit::Kilocalorie, value: 2000.0 },
    ReferenceIntake { item: IntakeItem::Nutrient(Nutrient::Fat), unit: IntakeUnit::Gram, value: 70.0 },
    ReferenceIntake { item: IntakeItem::Nutrient(Nutrient::SaturatedFat), unit: IntakeUnit::Gram, value: 20.0 },
    ReferenceIntake { item: IntakeItem::Nutrient(Nutrient::Carbohydrate), unit: IntakeUnit::Gram, value: 260.0 },
    ReferenceIntake { item: IntakeItem::Nutrient(Nutrient::Sugar), unit: IntakeUnit::Gram, value: 90.0 },
    ReferenceIntake { item: IntakeItem::Nutrient(Nutrient::Protein), unit: IntakeUnit::Gram, value: 50.0 },
    ReferenceIntake { item: IntakeItem::Nutrient(Nutrient::Salt), unit: IntakeUnit::Gram, value: 6.0 },
];

pub fn reference_intake(item: IntakeItem, unit: IntakeUnit) -> Option<f64> {
    REFERENCE_INTAKES
        .iter()
        .find(|r| r.item == item && r.unit == unit)
        .map(|r| r.value)
}

/// The 14 allergens requiring mandatory labelling. Declaration order is the
/// canonical index order used by every matrix, report and model bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Allergen {
    Gluten,
    Crustaceans,
    Eggs,
    Fish,
    Peanuts,
    Soybeans,
    Milk,
    Nuts,
    Celery,
    Mustard,
    Sesame,
    Sulphur,
    Lupine,
    Molluscs,
}

pub const ALLERGEN_COUNT: usize = 14;

impl Allergen {
    pub const ALL: [Allergen; ALLERGEN_COUNT] = [
        Allergen::Gluten,
        Allergen::Crustaceans,
        Allergen::Eggs,
        Allergen::Fish,
        Allergen::Peanuts,
        Allergen::Soybeans,
        Allergen::Milk,
        Allergen::Nuts,
        Allergen::Celery,
        Allergen::Mustard,
        Allergen::Sesame,
        Allergen::Sulphur,
        Allergen::Lupine,
        Allergen::Molluscs,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Allergen, ModelError> {
        Allergen::ALL
            .get(index)
            .copied()
            .ok_or(ModelError::AllergenIndex(index))
    }

    pub fn name(self) -> &'static str {
        match self {
            Allergen::Gluten => "Gluten",
            Allergen::Crustaceans => "Crustaceans",
            Allergen::Eggs => "Eggs",
            Allergen::Fish => "Fish",
            Allergen::Peanuts => "Peanuts",
            Allergen::Soybeans => "Soybeans",
            Allergen::Milk => "Milk",
            Allergen::Nuts => "Nuts",
            Allergen::Celery => "Celery",
            Allergen::Mustard => "Mustard",
            Allergen::Sesame => "Sesame",
            Allergen::Sulphur => "Sulphur",
            Allergen::Lupine => "Lupine",
            Allergen::Molluscs => "Molluscs",
        }
    }
}

impl fmt::Display for Allergen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Allergen {
    type Err = ModelError;

    /// Accepts canonical names case-insensitively plus the regulation's
    /// long-form names and a few common synonyms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase();
        let found = match key.as_str() {
            "gluten" | "cereals containing gluten" | "cereals" => Allergen::Gluten,
            "crustaceans" | "crustacean" => Allergen::Crustaceans,
            "eggs" | "egg" => Allergen::Eggs,
            "fish" => Allergen::Fish,
            "peanuts" | "peanut" => Allergen::Peanuts,
            "soybeans" | "soybean" | "soy" | "soya" => Allergen::Soybeans,
            "milk" | "milk and lactose" | "lactose" => Allergen::Milk,
            "nuts" | "nut" | "tree nuts" => Allergen::Nuts,
            "celery" => Allergen::Celery,
            "mustard" => Allergen::Mustard,
            "sesame" | "sesame seeds" => Allergen::Sesame,
            "sulphur" | "sulphites" | "sulfites" | "sulphur dioxide and sulphites"
            | "sulphur dioxide" => Allergen::Sulphur,
            "lupine" | "lupin" => Allergen::Lupine,
            "molluscs" | "mollusc" | "mollusks" => Allergen::Molluscs,
            _ => return Err(ModelError::UnknownAllergen(s.to_string())),
        };
        Ok(found)
    }
}

/// A subset of the 14 allergens, stored as a bit mask over canonical indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LabelSet(u16);

impl LabelSet {
    const MASK: u16 = (1 << ALLERGEN_COUNT) - 1;

    pub fn empty() -> Self {
        LabelSet(0)
    }

    pub fn all() -> Self {
        LabelSet(Self::MASK)
    }

    /// Returns `None` when bits outside the 14 allergen positions are set.
    pub fn from_bits(bits: u16) -> Option<Self> {
        (bits & !Self::MASK == 0).then_some(LabelSet(bits))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn contains(self, a: Allergen) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn insert(&mut self, a: Allergen) {
        self.0 |= 1 << a.index();
    }

    pub fn remove(&mut self, a: Allergen) {
        self.0 &= !(1 << a.index());
    }

    pub fn with(mut self, a: Allergen) -> Self {
        self.insert(a);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    pub fn difference(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & !other.0)
    }

    /// Members in canonical order.
    pub fn iter(self) -> impl Iterator<Item = Allergen> {
        Allergen::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<Allergen> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Allergen>>(iter: I) -> Self {
        let mut set = LabelSet::empty();
        for a in iter {
            set.insert(a);
        }
        set
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let members = Vec::<Allergen>::deserialize(deserializer)?;
        Ok(members.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BasisUnit {
    #[default]
    #[serde(rename = "per_100g")]
    Per100g,
    #[serde(rename = "per_100ml")]
    Per100ml,
}

impl FromStr for BasisUnit {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace(' ', "").as_str() {
            "per_100g" | "100g" | "g" => Ok(BasisUnit::Per100g),
            "per_100ml" | "100ml" | "ml" => Ok(BasisUnit::Per100ml),
            _ => Err(ModelError::UnknownBasis(s.to_string())),
        }
    }
}

/// Nutrient declaration per 100 g or 100 ml. Absent entries mean "not
/// declared", which is distinct from a declared zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NutrientPanel {
    #[serde(default)]
    quantities: BTreeMap<Nutrient, f64>,
    #[serde(default)]
    pub energy_kj: Option<f64>,
    #[serde(default)]
    pub energy_kcal: Option<f64>,
    #[serde(default)]
    pub basis: BasisUnit,
}

fn check_quantity(field: &str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidQuantity { field: field.to_string(), value })
    }
}

impl NutrientPanel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, n: Nutrient) -> Option<f64> {
        self.quantities.get(&n).copied()
    }

    pub fn set(&mut self, n: Nutrient, grams: f64) -> Result<(), ModelError> {
        self.quantities.insert(n, check_quantity(n.code(), grams)?);
        Ok(())
    }

    pub fn clear(&mut self, n: Nutrient) {
        self.quantities.remove(&n);
    }

    pub fn set_energy_kj(&mut self, kj: f64) -> Result<(), ModelError> {
        self.energy_kj = Some(check_quantity("energy_kj", kj)?);
        Ok(())
    }

    pub fn set_energy_kcal(&mut self, kcal: f64) -> Result<(), ModelError> {
        self.energy_kcal = Some(check_quantity("energy_kcal", kcal)?);
        Ok(())
    }

    /// Builder-style setter for fixtures; panics on invalid quantities.
    pub fn with(mut self, n: Nutrient, grams: f64) -> Self {
        self.set(n, grams).expect("valid nutrient quantity");
        self
    }

    pub fn with_energy(mut self, kj: Option<f64>, kcal: Option<f64>) -> Self {
        if let Some(v) = kj {
            self.set_energy_kj(v).expect("valid energy");
        }
        if let Some(v) = kcal {
            self.set_energy_kcal(v).expect("valid energy");
        }
        self
    }

    pub fn quantities(&self) -> impl Iterator<Item = (Nutrient, f64)> + '_ {
        self.quantities.iter().map(|(n, v)| (*n, *v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetContent {
    pub value: Option<f64>,
    pub unit: Option<String>,
}

/// One product in the FIC data model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub gtin: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub brand: String,
    #[serde(default)]
    pub product_group: String,
    #[serde(default)]
    pub net_content: Option<NetContent>,
    #[serde(default)]
    pub portions: Option<u32>,
    #[serde(default)]
    pub nutrients: NutrientPanel,
    #[serde(default)]
    pub declared_allergens: LabelSet,
    #[serde(default)]
    pub ingredients_raw: String,
    // Carried for schema completeness; no rules read these areas.
    #[serde(default)]
    pub vitamins: BTreeMap<String, String>,
    #[serde(default)]
    pub minerals: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: BTreeMap<String, String>,
}

impl ProductRecord {
    pub fn new(gtin: impl Into<String>) -> Self {
        ProductRecord {
            gtin: gtin.into(),
            name: String::new(),
            brand: String::new(),
            product_group: String::new(),
            net_content: None,
            portions: None,
            nutrients: NutrientPanel::default(),
            declared_allergens: LabelSet::empty(),
            ingredients_raw: String::new(),
            vitamins: BTreeMap::new(),
            minerals: BTreeMap::new(),
            warnings: BTreeMap::new(),
        }
    }

    pub fn has_ingredients(&self) -> bool {
        !self.ingredients_raw.trim().is_empty()
    }
}
