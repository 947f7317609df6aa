//! JSON instance files, outcome and distribution dumps, and report output.
//!
//! An instance file looks like
//!
//! ```json
//! {
//!   "family": "single-minded-ca",
//!   "n": 3,
//!   "m": 2,
//!   "alpha": "1/2",
//!   "valuations": [
//!     {"kind": "single-minded", "bundle": [0, 1], "value": "5/1"},
//!     {"kind": "single-minded", "bundle": [0], "value": 3},
//!     {"kind": "single-minded", "bundle": [1], "value": "3"}
//!   ]
//! }
//! ```
//!
//! Optional fields: `alpha` (single-minded), `beta` (single-item, turns on
//! uniform thinning), `breakpoints` (gap-toy) and `payment_rule`
//! (`expected-vcg` or `first-price`). Valuation kinds are `scalar`
//! (`value`), `additive` (`values`), `single-minded` (`bundle`, `value`),
//! `table` (`entries` of `{bundle, value}`) and `single-peaked` (`peak`).
//! Rationals are `"p/q"` strings, integer strings, decimals or JSON integers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{self, NoMoneyKind, RoundingCase, DEFAULT_BREAKPOINTS};
use crate::mechanism::{MechanismOutcome, PaymentRule};
use crate::model::{Allocation, Bundle, Family, FamilyTag, Instance, Valuation, ValuationProfile};
use crate::rational::{self, Rational};
use crate::rounding::AllocationDistribution;
use crate::verify::VerificationReport;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ratio(#[serde(with = "crate::rational::serde_ratio")] pub Rational);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub family: String,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Ratio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Ratio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payment_rule: Option<String>,
    pub valuations: Vec<ValuationFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ValuationFile {
    Scalar { value: Ratio },
    Additive { values: Vec<Ratio> },
    SingleMinded { bundle: Vec<usize>, value: Ratio },
    Table { entries: Vec<TableEntry> },
    SinglePeaked { peak: Ratio },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub bundle: Vec<usize>,
    pub value: Ratio,
}

/// An instance, the reported profile, and the payment rule to apply.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub instance: Instance,
    pub profile: ValuationProfile,
    pub payment_rule: PaymentRule,
}

fn bundle_from(items: &[usize], m: usize, field: &str) -> Result<Bundle> {
    if let Some(j) = items.iter().find(|&&j| j >= m) {
        return Err(Error::input(format!("{field}: item {j} outside 0..{m}")));
    }
    Ok(Bundle::from_items(items.iter().copied()))
}

fn valuation_from(file: &ValuationFile, m: usize, field: &str) -> Result<Valuation> {
    Ok(match file {
        ValuationFile::Scalar { value } => Valuation::scalar(value.0.clone()),
        ValuationFile::Additive { values } => {
            Valuation::Additive(values.iter().map(|r| r.0.clone()).collect())
        }
        ValuationFile::SingleMinded { bundle, value } => Valuation::SingleMinded {
            bundle: bundle_from(bundle, m, &format!("{field}.bundle"))?,
            value: value.0.clone(),
        },
        ValuationFile::Table { entries } => {
            let mut t = BTreeMap::new();
            for (e, entry) in entries.iter().enumerate() {
                let b = bundle_from(&entry.bundle, m, &format!("{field}.entries[{e}].bundle"))?;
                if t.insert(b, entry.value.0.clone()).is_some() {
                    return Err(Error::input(format!(
                        "{field}.entries[{e}]: bundle {b} listed twice"
                    )));
                }
            }
            Valuation::Table(t)
        }
        ValuationFile::SinglePeaked { peak } => Valuation::SinglePeaked {
            peak: peak.0.clone(),
        },
    })
}

fn valuation_to(v: &Valuation) -> ValuationFile {
    match v {
        Valuation::Additive(vs) => ValuationFile::Additive {
            values: vs.iter().cloned().map(Ratio).collect(),
        },
        Valuation::SingleMinded { bundle, value } => ValuationFile::SingleMinded {
            bundle: bundle.items().collect(),
            value: Ratio(value.clone()),
        },
        Valuation::Table(t) => ValuationFile::Table {
            entries: t
                .iter()
                .map(|(b, v)| TableEntry {
                    bundle: b.items().collect(),
                    value: Ratio(v.clone()),
                })
                .collect(),
        },
        Valuation::SinglePeaked { peak } => ValuationFile::SinglePeaked {
            peak: Ratio(peak.clone()),
        },
    }
}

impl InstanceFile {
    /// Builds and validates the scenario; errors name the offending field.
    pub fn into_scenario(self) -> Result<Scenario> {
        let family: FamilyTag = self
            .family
            .parse()
            .map_err(|e| Error::input(format!("family: {e}")))?;
        if self.valuations.len() != self.n {
            return Err(Error::input(format!(
                "valuations: expected {} entries (n), found {}",
                self.n,
                self.valuations.len()
            )));
        }
        let vals = self
            .valuations
            .iter()
            .enumerate()
            .map(|(i, v)| valuation_from(v, self.m, &format!("valuations[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let profile = ValuationProfile::new(vals);
        let reject = |field: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::input(format!(
                    "{field}: not used by family {family}"
                )))
            } else {
                Ok(())
            }
        };
        let need_m1 = |m: usize| -> Result<()> {
            if m != 1 {
                Err(Error::input(format!(
                    "m: family {family} has exactly one item, got {m}"
                )))
            } else {
                Ok(())
            }
        };
        let instance = match family {
            FamilyTag::SingleItem => {
                need_m1(self.m)?;
                reject("alpha", self.alpha.is_some())?;
                reject("breakpoints", self.breakpoints.is_some())?;
                match &self.beta {
                    Some(b) => instances::make_case_b_family(self.n, b.0.clone()),
                    None => instances::make_single_item(self.n),
                }
            }
            FamilyTag::SingleMindedCa => {
                reject("beta", self.beta.is_some())?;
                reject("breakpoints", self.breakpoints.is_some())?;
                let desires = profile
                    .valuations()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| match v {
                        Valuation::SingleMinded { bundle, .. } => Ok(*bundle),
                        _ => Err(Error::input(format!(
                            "valuations[{i}].kind: single-minded-ca needs single-minded valuations"
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                match &self.alpha {
                    Some(a) => {
                        instances::make_single_minded_ca_with_alpha(self.m, desires, a.0.clone())
                    }
                    None => instances::make_single_minded_ca(self.m, desires),
                }
            }
            FamilyTag::GapToy => {
                reject("alpha", self.alpha.is_some())?;
                reject("beta", self.beta.is_some())?;
                instances::make_gap_toy_with_breakpoints(
                    self.n,
                    self.m,
                    self.breakpoints.unwrap_or(DEFAULT_BREAKPOINTS),
                )
            }
            FamilyTag::NoMoneyLottery => {
                need_m1(self.m)?;
                reject("alpha", self.alpha.is_some())?;
                reject("beta", self.beta.is_some())?;
                reject("breakpoints", self.breakpoints.is_some())?;
                instances::make_no_money(self.n, NoMoneyKind::Lottery)
            }
            FamilyTag::SinglePeaked => {
                reject("alpha", self.alpha.is_some())?;
                reject("beta", self.beta.is_some())?;
                reject("breakpoints", self.breakpoints.is_some())?;
                instances::make_single_peaked(self.n, self.m)
            }
        }?;
        instance
            .validate_profile(&profile)
            .map_err(|e| Error::input(format!("valuations: {e}")))?;
        let payment_rule = match &self.payment_rule {
            None => PaymentRule::ExpectedVcg,
            Some(r) => r
                .parse()
                .map_err(|e| Error::input(format!("payment_rule: {e}")))?,
        };
        Ok(Scenario {
            instance,
            profile,
            payment_rule,
        })
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let inst = &s.instance;
        let spec = inst.spec();
        let (alpha, beta, breakpoints) = match inst.family() {
            Family::SingleItem if spec.case == RoundingCase::B => {
                (None, Some(Ratio(spec.beta.clone())), None)
            }
            Family::SingleMindedCa { .. } => (Some(Ratio(spec.alpha.clone())), None, None),
            Family::GapToy => (None, None, spec.curve.as_ref().map(|c| c.knots().len() - 1)),
            _ => (None, None, None),
        };
        InstanceFile {
            family: inst.tag().to_string(),
            n: inst.num_bidders(),
            m: inst.num_items(),
            alpha,
            beta,
            breakpoints,
            payment_rule: match s.payment_rule {
                PaymentRule::ExpectedVcg => None,
                rule => Some(rule.as_str().to_string()),
            },
            valuations: s.profile.valuations().iter().map(valuation_to).collect(),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: InstanceFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    file.into_scenario()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// The instance and profile stored at `path`.
pub fn load_instance(path: &Path) -> Result<(Instance, ValuationProfile)> {
    let s = load_scenario(path)?;
    Ok((s.instance, s.profile))
}

pub fn scenario_to_json(s: &Scenario) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_scenario(s)).expect("instance files serialize")
}

pub fn write_instance(path: &Path, s: &Scenario) -> Result<()> {
    write_text(path, &scenario_to_json(s))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

/// One row of a distribution dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub bitmasks: Vec<u32>,
    pub bundles: Vec<String>,
    pub probability: Ratio,
}

pub fn distribution_rows(dist: &AllocationDistribution) -> Vec<DistributionRow> {
    dist.iter()
        .map(|(a, p)| DistributionRow {
            bitmasks: a.bitmasks(),
            bundles: a.bundles().iter().map(|b| b.to_string()).collect(),
            probability: Ratio(p.clone()),
        })
        .collect()
}

/// Rebuilds a distribution from its dump.
pub fn distribution_from_rows(rows: &[DistributionRow]) -> Result<AllocationDistribution> {
    AllocationDistribution::from_entries(rows.iter().map(|r| {
        (
            Allocation::new(r.bitmasks.iter().map(|&b| Bundle::from_bits(b)).collect()),
            r.probability.0.clone(),
        )
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFile {
    pub family: String,
    pub payment_rule: String,
    pub seed: u64,
    pub point: Vec<Ratio>,
    pub relaxed_value: Ratio,
    pub calibration: Ratio,
    pub distribution: Vec<DistributionRow>,
    pub realized: Vec<u32>,
    pub winners: Vec<usize>,
    pub payments: Vec<Ratio>,
    pub realized_payments: Vec<Ratio>,
}

pub fn outcome_file(instance: &Instance, out: &MechanismOutcome) -> OutcomeFile {
    let ratios = |v: &[Rational]| v.iter().cloned().map(Ratio).collect::<Vec<_>>();
    OutcomeFile {
        family: instance.tag().to_string(),
        payment_rule: out.payment_rule.as_str().to_string(),
        seed: out.seed,
        point: ratios(out.point.coords()),
        relaxed_value: Ratio(out.relaxed_value.clone()),
        calibration: Ratio(out.calibration.clone()),
        distribution: distribution_rows(&out.distribution),
        realized: out.realized.bitmasks(),
        winners: (0..out.realized.num_bidders())
            .filter(|&i| !out.realized.bundle(i).is_empty())
            .collect(),
        payments: ratios(&out.expected_payments),
        realized_payments: ratios(&out.realized_payments),
    }
}

pub fn outcome_to_json(instance: &Instance, out: &MechanismOutcome) -> String {
    serde_json::to_string_pretty(&outcome_file(instance, out)).expect("outcomes serialize")
}

pub fn report_to_json(report: &VerificationReport) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize")
}

/// CSV with columns `check, profile_id, bidder, misreport, lhs, rhs, pass`:
/// one row per failing case, and one summary row per check whose
/// `profile_id` column holds the case count.
pub fn report_to_csv(report: &VerificationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::input(format!("csv: {e}"));
    w.write_record([
        "check",
        "profile_id",
        "bidder",
        "misreport",
        "lhs",
        "rhs",
        "pass",
    ])
    .map_err(csv_err)?;
    for c in &report.checks {
        for wit in &c.witnesses {
            w.write_record([
                c.name.clone(),
                wit.profile_id.to_string(),
                wit.bidder.map(|b| b.to_string()).unwrap_or_default(),
                wit.misreport.clone().unwrap_or_default(),
                rational::format(&wit.lhs),
                rational::format(&wit.rhs),
                "false".to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            format!("{} (summary)", c.name),
            c.cases.to_string(),
            String::new(),
            String::new(),
            c.failures.to_string(),
            String::new(),
            c.passed().to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::input(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_report(
    dir: &Path,
    stem: &str,
    report: &VerificationReport,
    json: bool,
    csv: bool,
) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::input(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    if json {
        let p = dir.join(format!("{stem}.json"));
        write_text(&p, &report_to_json(report))?;
        written.push(p);
    }
    if csv {
        let p = dir.join(format!("{stem}.csv"));
        write_text(&p, &report_to_csv(report)?)?;
        written.push(p);
    }
    Ok(written)
}
