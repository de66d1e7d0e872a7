//! Formula-based consistency checks on the nutrient declaration.
//!
//! Every check is independent, so one product can raise several findings.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::CooccurrenceMatrix;
use crate::model::{BasisUnit, Nutrient, NutrientPanel, ProductRecord, KCAL_PER_KJ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorId {
    /// Energy in kJ not declared.
    #[serde(rename = "MV_KJ")]
    MissingKj,
    /// Energy in kcal not declared.
    #[serde(rename = "MV_KC")]
    MissingKcal,
    /// kJ/kcal ratio outside the tolerance band.
    #[serde(rename = "CE_EN")]
    ConversionFactor,
    /// Declared energy disagrees with the nutrient sum, or exceeds the maximum.
    #[serde(rename = "SE_EN")]
    EnergySum,
    /// Fatty acids exceed fat.
    #[serde(rename = "VE_FA")]
    FattyAcids,
    /// Sugar exceeds carbohydrates.
    #[serde(rename = "VE_SU")]
    Sugar,
    /// More than 100 g of nutrients per 100 g.
    #[serde(rename = "VE_IN")]
    NutrientTotal,
}

impl ErrorId {
    pub const ALL: [ErrorId; 7] = [
        ErrorId::MissingKj,
        ErrorId::MissingKcal,
        ErrorId::ConversionFactor,
        ErrorId::EnergySum,
        ErrorId::FattyAcids,
        ErrorId::Sugar,
        ErrorId::NutrientTotal,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ErrorId::MissingKj => "MV_KJ",
            ErrorId::MissingKcal => "MV_KC",
            ErrorId::ConversionFactor => "CE_EN",
            ErrorId::EnergySum => "SE_EN",
            ErrorId::FattyAcids => "VE_FA",
            ErrorId::Sugar => "VE_SU",
            ErrorId::NutrientTotal => "VE_IN",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn cause(self) -> &'static str {
        match self {
            ErrorId::MissingKj => "Declaration of energy [kJ] missing",
            ErrorId::MissingKcal => "Declaration of energy [kcal] missing",
            ErrorId::ConversionFactor => "Conversion factor [kJ] to [kcal] outside of tolerance bounds",
            ErrorId::EnergySum => "Sum of energy values differs too much from total energy value",
            ErrorId::FattyAcids => "Contains more fatty acids [g] than fat [g]",
            ErrorId::Sugar => "Contains more sugar [g] than carbohydrates [g]",
            ErrorId::NutrientTotal => "Contains more than 100g per 100g of a nutrient",
        }
    }
}

impl fmt::Display for ErrorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub symbol: String,
    pub value: f64,
}

/// One rule violation, self-contained for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub gtin: String,
    pub error_id: ErrorId,
    pub observed: Vec<Observation>,
    pub expected: String,
}

pub const MAX_ENERGY_EXPECTED: &str = "maximum energy 900 kcal / 3805 kJ per 100g";

#[derive(Debug, Error, PartialEq)]
pub enum RuleConfigError {
    #[error("conversion bounds must satisfy 0 < low < high, got [{0}, {1}]")]
    ConversionBounds(f64, f64),
    #[error("`{0}` must be finite and > 0")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub conversion_low: f64,
    pub conversion_high: f64,
    pub max_kcal: f64,
    pub max_kj: f64,
    /// Relative tolerance between declared energy and the nutrient sum.
    pub energy_sum_rel_tol: f64,
    /// Slack for gram inequalities so float noise never fires a rule.
    pub abs_tol: f64,
    /// Count polyols, organic acids and salt in the energy sum.
    pub include_extended_nutrients: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            conversion_low: 4.1,
            conversion_high: 4.3,
            max_kcal: 900.0,
            max_kj: 3805.0,
            energy_sum_rel_tol: 0.05,
            abs_tol: 1e-9,
            include_extended_nutrients: true,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), RuleConfigError> {
        if !(self.conversion_low > 0.0 && self.conversion_low < self.conversion_high)
            || !self.conversion_high.is_finite()
        {
            return Err(RuleConfigError::ConversionBounds(self.conversion_low, self.conversion_high));
        }
        for (name, v) in [
            ("max_kcal", self.max_kcal),
            ("max_kj", self.max_kj),
            ("energy_sum_rel_tol", self.energy_sum_rel_tol),
            ("abs_tol", self.abs_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RuleConfigError::NonPositive(name));
            }
        }
        Ok(())
    }
}

const CORE_ENERGY_NUTRIENTS: [Nutrient; 5] = [
    Nutrient::Carbohydrate,
    Nutrient::Protein,
    Nutrient::Fat,
    Nutrient::Alcohol,
    Nutrient::Fibre,
];
const EXTENDED_ENERGY_NUTRIENTS: [Nutrient; 3] =
    [Nutrient::Polyols, Nutrient::OrganicAcid, Nutrient::Salt];

fn energy_sum(p: &NutrientPanel, cfg: &RuleConfig, per_gram: impl Fn(Nutrient) -> f64) -> Option<f64> {
    let extended: &[Nutrient] = if cfg.include_extended_nutrients {
        &EXTENDED_ENERGY_NUTRIENTS
    } else {
        &[]
    };
    let mut total = None;
    for &n in CORE_ENERGY_NUTRIENTS.iter().chain(extended) {
        if let Some(m) = p.get(n) {
            *total.get_or_insert(0.0) += m * per_gram(n);
        }
    }
    total
}

/// Energy in kJ computed from the declared nutrient quantities; `None` when
/// none of the contributing nutrients is declared.
pub fn compute_energy_kj(p: &NutrientPanel, cfg: &RuleConfig) -> Option<f64> {
    energy_sum(p, cfg, |n| n.energy_value().map_or(0.0, |ev| ev.kj))
}

pub fn compute_energy_kcal(p: &NutrientPanel, cfg: &RuleConfig) -> Option<f64> {
    energy_sum(p, cfg, |n| n.energy_value().map_or(0.0, |ev| ev.kcal))
}

fn obs(symbol: &str, value: f64) -> Observation {
    Observation { symbol: symbol.to_string(), value }
}

fn relative_gap(declared: f64, computed: f64) -> f64 {
    (declared - computed).abs() / declared.max(f64::EPSILON)
}

/// Runs all checks on one product. Findings come out in error-id order.
pub fn check_product(product: &ProductRecord, cfg: &RuleConfig) -> Vec<Finding> {
    let p = &product.nutrients;
    let mut findings = Vec::new();
    let mut push = |error_id, observed, expected: String| {
        findings.push(Finding { gtin: product.gtin.clone(), error_id, observed, expected });
    };

    let declared = |v: Option<f64>, sym: &str| v.map(|x| vec![obs(sym, x)]).unwrap_or_default();
    if p.energy_kj.is_none() {
        push(
            ErrorId::MissingKj,
            declared(p.energy_kcal, "energy_kcal"),
            "energy [kJ] declared together with energy [kcal]".into(),
        );
    }
    if p.energy_kcal.is_none() {
        push(
            ErrorId::MissingKcal,
            declared(p.energy_kj, "energy_kj"),
            "energy [kcal] declared together with energy [kJ]".into(),
        );
    }

    if let (Some(kj), Some(kcal)) = (p.energy_kj, p.energy_kcal) {
        if kcal > 0.0 {
            let ratio = kj / kcal;
            if ratio < cfg.conversion_low || ratio > cfg.conversion_high {
                push(
                    ErrorId::ConversionFactor,
                    vec![obs("energy_kj", kj), obs("energy_kcal", kcal), obs("ratio", ratio)],
                    format!(
                        "{} <= kJ/kcal <= {} (physical factor {:.4}, 1 kJ = {:.3} kcal)",
                        cfg.conversion_low,
                        cfg.conversion_high,
                        1.0 / KCAL_PER_KJ,
                        KCAL_PER_KJ
                    ),
                );
            }
        }
    }

    let over_kcal = p.energy_kcal.filter(|&v| v > cfg.max_kcal + cfg.abs_tol);
    let over_kj = p.energy_kj.filter(|&v| v > cfg.max_kj + cfg.abs_tol);
    if over_kcal.is_some() || over_kj.is_some() {
        let mut observed = Vec::new();
        if let Some(v) = p.energy_kcal {
            observed.push(obs("energy_kcal", v));
        }
        if let Some(v) = p.energy_kj {
            observed.push(obs("energy_kj", v));
        }
        push(ErrorId::EnergySum, observed, MAX_ENERGY_EXPECTED.into());
    }

    let sum_check = match (p.energy_kj, p.energy_kcal) {
        (Some(kj), _) => compute_energy_kj(p, cfg).map(|c| (kj, c, "kJ")),
        (None, Some(kcal)) => compute_energy_kcal(p, cfg).map(|c| (kcal, c, "kcal")),
        (None, None) => None,
    };
    if let Some((declared, computed, unit)) = sum_check {
        let gap = relative_gap(declared, computed);
        if gap > cfg.energy_sum_rel_tol {
            let sym = if unit == "kJ" { "energy_kj" } else { "energy_kcal" };
            push(
                ErrorId::EnergySum,
                vec![obs(sym, declared), obs(&format!("computed_{unit}"), computed), obs("relative_gap", gap)],
                format!(
                    "|declared - computed| / declared <= {} in {unit}",
                    cfg.energy_sum_rel_tol
                ),
            );
        }
    }

    if let Some(fat) = p.get(Nutrient::Fat) {
        let sfa = p.get(Nutrient::SaturatedFat);
        let ufa = p.get(Nutrient::UnsaturatedFat);
        if sfa.is_some() || ufa.is_some() {
            let acids = sfa.unwrap_or(0.0) + ufa.unwrap_or(0.0);
            if acids > fat + cfg.abs_tol {
                let mut observed = vec![obs("FAT", fat)];
                observed.extend(sfa.map(|v| obs("SFA", v)));
                observed.extend(ufa.map(|v| obs("UFA", v)));
                push(ErrorId::FattyAcids, observed, "UFA + SFA <= FAT".into());
            }
        }
    }

    if let (Some(ch), Some(sug)) = (p.get(Nutrient::Carbohydrate), p.get(Nutrient::Sugar)) {
        if sug > ch + cfg.abs_tol {
            push(ErrorId::Sugar, vec![obs("CH", ch), obs("SUG", sug)], "SUG <= CH".into());
        }
    }

    if p.basis == BasisUnit::Per100g {
        let parts: Vec<Observation> = [
            Nutrient::Carbohydrate,
            Nutrient::Protein,
            Nutrient::Fat,
            Nutrient::Alcohol,
            Nutrient::Fibre,
            Nutrient::Salt,
        ]
        .iter()
        .filter_map(|&n| p.get(n).map(|v| obs(n.code(), v)))
        .collect();
        let total: f64 = parts.iter().map(|o| o.value).sum();
        if total > 100.0 + cfg.abs_tol {
            let mut observed = parts;
            observed.push(obs("total", total));
            push(ErrorId::NutrientTotal, observed, "CH + PRO + FAT + ALC + FIB + SAL <= 100 g".into());
        }
    }

    findings.sort_by_key(|f| f.error_id);
    findings
}

/// Checks a dataset in parallel; result order follows the input order.
pub fn check_all(products: &[ProductRecord], cfg: &RuleConfig) -> Vec<Vec<Finding>> {
    use rayon::prelude::*;
    products.par_iter().map(|p| check_product(p, cfg)).collect()
}

/// Pairwise error co-occurrence; each inner slice holds one product's findings.
pub fn error_cooccurrence<'a, I>(per_product: I) -> CooccurrenceMatrix
where
    I: IntoIterator<Item = &'a [Finding]>,
{
    let labels = ErrorId::ALL.iter().map(|e| e.code().to_string()).collect();
    CooccurrenceMatrix::from_index_sets(
        labels,
        per_product
            .into_iter()
            .map(|fs| fs.iter().map(|f| f.error_id.index()).collect::<Vec<_>>()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Nutrient::*;
    use proptest::prelude::*;

    fn product(panel: NutrientPanel) -> ProductRecord {
        let mut p = ProductRecord::new("4000000000001");
        p.nutrients = panel;
        p
    }

    fn ids(panel: NutrientPanel) -> Vec<ErrorId> {
        check_product(&product(panel), &RuleConfig::default())
            .into_iter()
            .map(|f| f.error_id)
            .collect()
    }

    fn reference_panel() -> NutrientPanel {
        NutrientPanel::new()
            .with(Carbohydrate, 10.0)
            .with(Protein, 5.0)
            .with(Fat, 3.0)
            .with(Fibre, 2.0)
    }

    #[test]
    fn energy_sums_for_reference_panel() {
        let cfg = RuleConfig::default();
        assert_eq!(compute_energy_kj(&reference_panel(), &cfg), Some(382.0));
        assert_eq!(compute_energy_kcal(&reference_panel(), &cfg), Some(91.0));
    }

    #[test]
    fn energy_sum_missing_vs_zero() {
        let cfg = RuleConfig::default();
        assert_eq!(compute_energy_kj(&NutrientPanel::new(), &cfg), None);
        assert_eq!(compute_energy_kcal(&NutrientPanel::new(), &cfg), None);
        assert_eq!(compute_energy_kj(&NutrientPanel::new().with(Salt, 6.0), &cfg), Some(0.0));
        // SFA alone never contributes energy
        assert_eq!(compute_energy_kj(&NutrientPanel::new().with(SaturatedFat, 6.0), &cfg), None);
    }

    #[test]
    fn extended_nutrients_flag() {
        let on = RuleConfig::default();
        let off = RuleConfig { include_extended_nutrients: false, ..RuleConfig::default() };
        let pol = NutrientPanel::new().with(Polyols, 10.0);
        assert_eq!(compute_energy_kcal(&pol, &on), Some(24.0));
        assert_eq!(compute_energy_kcal(&pol, &off), None);
        let mixed = reference_panel().with(OrganicAcid, 1.0);
        assert_eq!(compute_energy_kj(&mixed, &on), Some(395.0));
        assert_eq!(compute_energy_kj(&mixed, &off), Some(382.0));
    }

    #[test]
    fn missing_energy_fires_mv() {
        let found = ids(NutrientPanel::new().with_energy(None, Some(250.0)));
        assert!(found.contains(&ErrorId::MissingKj));
        assert!(!found.contains(&ErrorId::MissingKcal));
        let found = ids(NutrientPanel::new());
        assert!(found.contains(&ErrorId::MissingKj) && found.contains(&ErrorId::MissingKcal));
    }

    #[test]
    fn conversion_factor_in_band() {
        let found = ids(NutrientPanel::new().with_energy(Some(1000.0), Some(239.0)));
        assert!(!found.contains(&ErrorId::ConversionFactor));
        let found = ids(NutrientPanel::new().with_energy(Some(1000.0), Some(200.0)));
        assert!(found.contains(&ErrorId::ConversionFactor));
        // zero kcal: ratio undefined, no CE_EN
        let found = ids(NutrientPanel::new().with_energy(Some(0.0), Some(0.0)));
        assert!(!found.contains(&ErrorId::ConversionFactor));
    }

    #[test]
    fn reference_panel_is_clean() {
        let findings = check_product(
            &product(reference_panel().with_energy(Some(382.0), Some(91.0))),
            &RuleConfig::default(),
        );
        assert!(findings.is_empty(), "{findings:?}");
    }

    #[test]
    fn sum_mismatch_in_kj_and_kcal() {
        let found = ids(reference_panel().with_energy(Some(450.0), Some(107.0)));
        assert_eq!(found, vec![ErrorId::EnergySum]);
        // only kcal declared: checked in kcal
        let f = check_product(
            &product(reference_panel().with_energy(None, Some(120.0))),
            &RuleConfig::default(),
        );
        let se: Vec<_> = f.iter().filter(|f| f.error_id == ErrorId::EnergySum).collect();
        assert_eq!(se.len(), 1);
        assert_eq!(se[0].observed[1].symbol, "computed_kcal");
        // within 5 %
        assert!(ids(reference_panel().with_energy(Some(395.0), Some(94.0))).is_empty());
    }

    #[test]
    fn maximum_energy_reported_as_se_en() {
        let f = check_product(
            &product(NutrientPanel::new().with(Fat, 100.0).with_energy(Some(3900.0), Some(950.0))),
            &RuleConfig::default(),
        );
        assert!(f
            .iter()
            .any(|f| f.error_id == ErrorId::EnergySum && f.expected == MAX_ENERGY_EXPECTED));
    }

    #[test]
    fn fatty_acids_and_sugar() {
        let found = ids(NutrientPanel::new().with(Fat, 5.0).with(SaturatedFat, 4.0).with(UnsaturatedFat, 2.0));
        assert!(found.contains(&ErrorId::FattyAcids));
        let found = ids(NutrientPanel::new().with(SaturatedFat, 4.0));
        assert!(!found.contains(&ErrorId::FattyAcids));
        let found = ids(NutrientPanel::new().with(Carbohydrate, 5.0).with(Sugar, 5.5));
        assert!(found.contains(&ErrorId::Sugar));
        let found = ids(NutrientPanel::new().with(Carbohydrate, 5.0).with(Sugar, 5.0));
        assert!(!found.contains(&ErrorId::Sugar));
    }

    #[test]
    fn nutrient_total_only_per_100g() {
        let panel = NutrientPanel::new()
            .with(Carbohydrate, 50.0)
            .with(Protein, 30.0)
            .with(Fat, 25.0)
            .with(Salt, 2.0);
        assert!(ids(panel.clone()).contains(&ErrorId::NutrientTotal));
        let mut ml = panel;
        ml.basis = BasisUnit::Per100ml;
        assert!(!ids(ml).contains(&ErrorId::NutrientTotal));
    }

    #[test]
    fn config_validation() {
        assert!(RuleConfig::default().validate().is_ok());
        let bad = RuleConfig { conversion_low: 4.3, conversion_high: 4.1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RuleConfig { energy_sum_rel_tol: 0.0, ..Default::default() };
        assert_eq!(bad.validate(), Err(RuleConfigError::NonPositive("energy_sum_rel_tol")));
    }

    #[test]
    fn cooccurrence_cases() {
        let f = |ids: &[ErrorId]| -> Vec<Finding> {
            ids.iter()
                .map(|&e| Finding { gtin: "x".into(), error_id: e, observed: vec![], expected: String::new() })
                .collect()
        };
        let single = [f(&[ErrorId::MissingKj, ErrorId::ConversionFactor])];
        let m = error_cooccurrence(single.iter().map(Vec::as_slice));
        assert_eq!(m.absolute[0][2], 1);
        assert_eq!(m.absolute[0][0], 1);

        let empty: Vec<Vec<Finding>> = vec![];
        let m = error_cooccurrence(empty.iter().map(Vec::as_slice));
        assert!(m.absolute.iter().flatten().all(|&c| c == 0));
        assert!(m.relative_percent.iter().flatten().all(|&c| c == 0.0));

        let three = [
            f(&[ErrorId::MissingKj]),
            f(&[ErrorId::MissingKj, ErrorId::EnergySum]),
            f(&[ErrorId::EnergySum]),
        ];
        let m = error_cooccurrence(three.iter().map(Vec::as_slice));
        let (kj, se) = (ErrorId::MissingKj.index(), ErrorId::EnergySum.index());
        assert_eq!(m.absolute[kj][se], 1);
        assert_eq!(m.absolute[kj][kj], 2);
        assert_eq!(m.absolute[se][se], 2);
        assert_eq!(m.relative_percent[kj][se], 50.0);
    }

    fn panel_strategy() -> impl Strategy<Value = NutrientPanel> {
        proptest::collection::vec(proptest::option::of(0.0f64..60.0), 12).prop_map(|qs| {
            let mut p = NutrientPanel::new();
            for (n, q) in Nutrient::ALL.iter().zip(qs) {
                if let Some(q) = q {
                    p.set(*n, q).unwrap();
                }
            }
            p
        })
    }

    proptest! {
        #[test]
        fn adding_quantity_keeps_ve_in(panel in panel_strategy(), k in 0usize..6, extra in 0.0f64..50.0) {
            let before = ids(panel.clone()).contains(&ErrorId::NutrientTotal);
            let n = [Carbohydrate, Protein, Fat, Alcohol, Fibre, Salt][k];
            let mut more = panel;
            let current = more.get(n).unwrap_or(0.0);
            more.set(n, current + extra).unwrap();
            if before {
                prop_assert!(ids(more).contains(&ErrorId::NutrientTotal));
            }
        }

        #[test]
        fn implicit_ratio_envelope(q in proptest::collection::vec(0.01f64..100.0, 5)) {
            let cfg = RuleConfig { include_extended_nutrients: false, ..Default::default() };
            let mut p = NutrientPanel::new();
            for (n, v) in CORE_ENERGY_NUTRIENTS.iter().zip(q) {
                p.set(*n, v).unwrap();
            }
            let ratio = compute_energy_kj(&p, &cfg).unwrap() / compute_energy_kcal(&p, &cfg).unwrap();
            prop_assert!((4.0 - 1e-12..=4.33 + 1e-12).contains(&ratio));
        }

        #[test]
        fn findings_are_sorted(panel in panel_strategy(), kj in proptest::option::of(0.0f64..5000.0),
                               kcal in proptest::option::of(0.0f64..1200.0)) {
            let f = check_product(&product(panel.with_energy(kj, kcal)), &RuleConfig::default());
            prop_assert!(f.windows(2).all(|w| w[0].error_id <= w[1].error_id));
        }
    }
}
