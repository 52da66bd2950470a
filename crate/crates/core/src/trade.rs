//! Trades, per-pair base-unit conventions, and the digit/roundness
//! primitives every detector is built on.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fixed::{Amount, Price, POW10, SCALE};

/// One executed transaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trade {
    pub exchange: String,
    pub pair: String,
    pub timestamp_ms: i64,
    pub price: Price,
    pub amount: Amount,
}

/// Smallest allowed base-unit exponent (one sub-unit).
pub const MIN_BASE_EXPONENT: i32 = -(SCALE as i32);
pub const MAX_BASE_EXPONENT: i32 = 4;

/// Base-unit convention for a currency pair: one base unit is 10^e native units.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairSpec {
    pub pair: String,
    pub base_unit_exponent: i32,
}

impl PairSpec {
    pub fn new(pair: impl Into<String>, base_unit_exponent: i32) -> Result<Self> {
        if !(MIN_BASE_EXPONENT..=MAX_BASE_EXPONENT).contains(&base_unit_exponent) {
            return Err(Error::Config(format!(
                "base unit exponent {base_unit_exponent} outside [{MIN_BASE_EXPONENT}, {MAX_BASE_EXPONENT}]"
            )));
        }
        Ok(PairSpec {
            pair: pair.into(),
            base_unit_exponent,
        })
    }

    /// Derive the exponent from a reference USD price of one native unit.
    ///
    /// Picks the largest power of ten whose value does not exceed one dollar.
    /// At sample-period prices this reproduces the built-in conventions
    /// (BTC ~$9000 -> -4, ETH ~$200 -> -3, LTC ~$80 -> -2, XRP ~$0.3 -> 0).
    pub fn from_reference_price(pair: impl Into<String>, usd_price: f64) -> Result<Self> {
        if !(usd_price.is_finite() && usd_price > 0.0) {
            return Err(domain(format!(
                "reference price must be positive, got {usd_price}"
            )));
        }
        let mut e = (-usd_price.log10()).floor() as i32;
        // guard against log10 rounding at exact powers of ten
        while 10f64.powi(e) * usd_price > 1.0 + 1e-12 {
            e -= 1;
        }
        while 10f64.powi(e + 1) * usd_price <= 1.0 + 1e-12 {
            e += 1;
        }
        PairSpec::new(pair, e.clamp(MIN_BASE_EXPONENT, MAX_BASE_EXPONENT))
    }

    /// Decimal places between a sub-unit and a base unit (8 + e).
    fn base_decimals(&self) -> u32 {
        (SCALE as i32 + self.base_unit_exponent) as u32
    }
}

/// Registry of pair conventions, seeded with the four built-in pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRegistry {
    specs: BTreeMap<String, PairSpec>,
}

impl Default for PairRegistry {
    fn default() -> Self {
        let mut reg = PairRegistry::empty();
        for (pair, e) in [
            ("BTC/USD", -4),
            ("ETH/USD", -3),
            ("LTC/USD", -2),
            ("XRP/USD", 0),
        ] {
            reg.insert(PairSpec::new(pair, e).expect("built-in exponent in range"));
        }
        reg
    }
}

impl PairRegistry {
    pub fn empty() -> Self {
        PairRegistry {
            specs: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, spec: PairSpec) {
        self.specs.insert(spec.pair.clone(), spec);
    }

    pub fn get(&self, pair: &str) -> Result<&PairSpec> {
        self.specs
            .get(pair)
            .ok_or_else(|| Error::Config(format!("no base-unit convention for pair `{pair}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PairSpec> {
        self.specs.values()
    }

    /// Apply overrides from `PAIR = exponent` lines; `#` starts a comment.
    pub fn load_overrides(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "pair config line {}: expected `PAIR = exponent`",
                    lineno + 1
                ))
            })?;
            let key = key.trim().trim_matches('"');
            let exponent: i32 = value.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "pair config line {}: bad exponent `{}`",
                    lineno + 1,
                    value.trim()
                ))
            })?;
            self.insert(PairSpec::new(key, exponent)?);
        }
        Ok(())
    }
}

/// An exact count of base units: `numerator / 10^decimals`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BaseUnits {
    numerator: u64,
    decimals: u32,
}

impl BaseUnits {
    pub fn numerator(self) -> u64 {
        self.numerator
    }

    pub fn decimals(self) -> u32 {
        self.decimals
    }

    pub fn whole(self) -> u64 {
        self.numerator / POW10[self.decimals as usize]
    }

    pub fn is_integer(self) -> bool {
        self.numerator % POW10[self.decimals as usize] == 0
    }

    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / POW10[self.decimals as usize] as f64
    }
}

impl fmt::Display for BaseUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = POW10[self.decimals as usize];
        let (int, frac) = (self.numerator / d, self.numerator % d);
        if frac == 0 {
            write!(f, "{int}")
        } else {
            let digits = format!("{frac:0width$}", width = self.decimals as usize);
            write!(f, "{int}.{}", digits.trim_end_matches('0'))
        }
    }
}

/// Leading non-zero decimal digit of a positive amount.
pub fn first_significant_digit(amount: Amount) -> Result<u8> {
    let n = amount.sub_units();
    if n == 0 {
        return Err(domain("first significant digit of zero"));
    }
    Ok((n / POW10[n.ilog10() as usize]) as u8)
}

/// Express an amount in base units, exactly.
pub fn to_base_units(amount: Amount, spec: &PairSpec) -> BaseUnits {
    BaseUnits {
        numerator: amount.sub_units(),
        decimals: spec.base_decimals(),
    }
}

/// True iff the amount is an exact integer multiple of 100 base units.
pub fn is_round(amount: Amount, spec: &PairSpec) -> bool {
    let n = amount.sub_units();
    n != 0 && n % POW10[spec.base_decimals() as usize + 2] == 0
}

/// Place value, in base units, of the last non-zero digit of a trade size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoundnessLevel {
    TenThousandsOrMore,
    Thousands,
    Hundreds,
    Tens,
    Ones,
    Tenths,
    Hundredths,
    ThousandthsOrLess,
}

impl RoundnessLevel {
    pub const ALL: [RoundnessLevel; 8] = [
        RoundnessLevel::TenThousandsOrMore,
        RoundnessLevel::Thousands,
        RoundnessLevel::Hundreds,
        RoundnessLevel::Tens,
        RoundnessLevel::Ones,
        RoundnessLevel::Tenths,
        RoundnessLevel::Hundredths,
        RoundnessLevel::ThousandthsOrLess,
    ];

    /// Bucket for a last-non-zero-digit place value of 10^place base units.
    pub fn from_place(place: i32) -> Self {
        match place {
            p if p >= 4 => RoundnessLevel::TenThousandsOrMore,
            3 => RoundnessLevel::Thousands,
            2 => RoundnessLevel::Hundreds,
            1 => RoundnessLevel::Tens,
            0 => RoundnessLevel::Ones,
            -1 => RoundnessLevel::Tenths,
            -2 => RoundnessLevel::Hundredths,
            _ => RoundnessLevel::ThousandthsOrLess,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RoundnessLevel::TenThousandsOrMore => "ten_thousands_or_more",
            RoundnessLevel::Thousands => "thousands",
            RoundnessLevel::Hundreds => "hundreds",
            RoundnessLevel::Tens => "tens",
            RoundnessLevel::Ones => "ones",
            RoundnessLevel::Tenths => "tenths",
            RoundnessLevel::Hundredths => "hundredths",
            RoundnessLevel::ThousandthsOrLess => "thousandths_or_less",
        }
    }
}

pub fn roundness_level(amount: Amount, spec: &PairSpec) -> Result<RoundnessLevel> {
    if amount.is_zero() {
        return Err(domain("roundness of zero amount"));
    }
    let place = amount.trailing_decimal_zeros() as i32 - spec.base_decimals() as i32;
    Ok(RoundnessLevel::from_place(place))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegulatoryClass {
    Regulated,
    UnregulatedTier1,
    UnregulatedTier2,
}

impl FromStr for RegulatoryClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', '_', ' '], "")
            .as_str()
        {
            "regulated" | "r" => Ok(RegulatoryClass::Regulated),
            "unregulatedtier1" | "tier1" | "ut" => Ok(RegulatoryClass::UnregulatedTier1),
            "unregulatedtier2" | "tier2" | "u" => Ok(RegulatoryClass::UnregulatedTier2),
            other => Err(Error::Config(format!("unknown regulatory class `{other}`"))),
        }
    }
}

/// Exchange-level covariates used as regression controls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub age_years: Option<f64>,
    pub rank: Option<f64>,
    pub traffic_pct: Option<f64>,
    pub unique_visitors: Option<f64>,
}

impl Covariates {
    pub const NAMES: [&'static str; 4] = ["age", "rank", "traffic_pct", "unique_visitors"];

    /// All four covariates, or `None` when any is missing.
    pub fn complete(&self) -> Option<[f64; 4]> {
        Some([
            self.age_years?,
            self.rank?,
            self.traffic_pct?,
            self.unique_visitors?,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeMeta {
    pub exchange_id: String,
    pub name: String,
    pub class: RegulatoryClass,
    #[serde(default)]
    pub covariates: Covariates,
}

#[derive(Debug, Deserialize)]
struct MetaRow {
    exchange: String,
    #[serde(default)]
    name: Option<String>,
    class: String,
    #[serde(default)]
    age: Option<f64>,
    #[serde(default)]
    rank: Option<f64>,
    #[serde(default)]
    traffic_pct: Option<f64>,
    #[serde(default)]
    unique_visitors: Option<f64>,
}

/// Read `exchange,name,class,age,rank,traffic_pct,unique_visitors` rows;
/// empty covariate cells are treated as missing.
pub fn read_exchange_meta<R: Read>(reader: R) -> Result<BTreeMap<String, ExchangeMeta>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<MetaRow>() {
        let row = row.map_err(|e| Error::Config(format!("exchange metadata: {e}")))?;
        let meta = ExchangeMeta {
            name: row
                .name
                .filter(|n| !n.is_empty())
                .unwrap_or_else(|| row.exchange.clone()),
            class: row.class.parse()?,
            covariates: Covariates {
                age_years: row.age,
                rank: row.rank,
                traffic_pct: row.traffic_pct,
                unique_visitors: row.unique_visitors,
            },
            exchange_id: row.exchange,
        };
        out.insert(meta.exchange_id.clone(), meta);
    }
    Ok(out)
}
