//! Reference data for the blood domain: ABO/Rh groups, components,
//! transfusion compatibility, rarity scores, shelf lives and the population
//! distribution used for synthetic donors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// One of the eight ABO/Rh blood groups.
///
/// Variant order is the canonical order used for sampling and serialization
/// (descending population prevalence).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BloodType {
    #[serde(rename = "O+")]
    OPos,
    #[serde(rename = "A+")]
    APos,
    #[serde(rename = "B+")]
    BPos,
    #[serde(rename = "O-")]
    ONeg,
    #[serde(rename = "A-")]
    ANeg,
    #[serde(rename = "AB+")]
    AbPos,
    #[serde(rename = "B-")]
    BNeg,
    #[serde(rename = "AB-")]
    AbNeg,
}

const ANTIGEN_A: u8 = 0b01;
const ANTIGEN_B: u8 = 0b10;

impl BloodType {
    pub const ALL: [BloodType; 8] = [
        BloodType::OPos,
        BloodType::APos,
        BloodType::BPos,
        BloodType::ONeg,
        BloodType::ANeg,
        BloodType::AbPos,
        BloodType::BNeg,
        BloodType::AbNeg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BloodType::OPos => "O+",
            BloodType::APos => "A+",
            BloodType::BPos => "B+",
            BloodType::ONeg => "O-",
            BloodType::ANeg => "A-",
            BloodType::AbPos => "AB+",
            BloodType::BNeg => "B-",
            BloodType::AbNeg => "AB-",
        }
    }

    /// ABO antigens carried by red cells of this group, as a bit set.
    pub fn abo_antigens(self) -> u8 {
        match self {
            BloodType::OPos | BloodType::ONeg => 0,
            BloodType::APos | BloodType::ANeg => ANTIGEN_A,
            BloodType::BPos | BloodType::BNeg => ANTIGEN_B,
            BloodType::AbPos | BloodType::AbNeg => ANTIGEN_A | ANTIGEN_B,
        }
    }

    pub fn rh_positive(self) -> bool {
        matches!(
            self,
            BloodType::OPos | BloodType::APos | BloodType::BPos | BloodType::AbPos
        )
    }

    /// Position in [`BloodType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether a recipient of this type can safely receive from `donor`.
    pub fn can_receive_from(self, donor: BloodType) -> bool {
        compatible_donors(self).contains(donor)
    }
}

impl fmt::Display for BloodType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BloodType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BloodType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown blood type {s:?}")))
    }
}

/// Blood product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "RBC")]
    Rbc,
    #[serde(rename = "PLAS")]
    Plas,
    #[serde(rename = "PLAT")]
    Plat,
    #[serde(rename = "WB")]
    Wb,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Rbc, Component::Plas, Component::Plat, Component::Wb];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Rbc => "RBC",
            Component::Plas => "PLAS",
            Component::Plat => "PLAT",
            Component::Wb => "WB",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Component::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown component {s:?}")))
    }
}

/// A set of blood types stored as a bit mask over [`BloodType::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BloodTypeSet(u8);

impl BloodTypeSet {
    pub const fn empty() -> Self {
        BloodTypeSet(0)
    }

    pub fn contains(self, t: BloodType) -> bool {
        self.0 & (1 << t.index()) != 0
    }

    pub fn with(self, t: BloodType) -> Self {
        BloodTypeSet(self.0 | (1 << t.index()))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in canonical order.
    pub fn iter(self) -> impl Iterator<Item = BloodType> {
        BloodType::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl FromIterator<BloodType> for BloodTypeSet {
    fn from_iter<I: IntoIterator<Item = BloodType>>(iter: I) -> Self {
        iter.into_iter().fold(BloodTypeSet::empty(), BloodTypeSet::with)
    }
}

/// Recipient → donor-set table for red-cell compatibility, applied uniformly
/// to every component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityMatrix {
    donors_for: [BloodTypeSet; 8],
}

impl CompatibilityMatrix {
    /// The standard ABO/Rh matrix.
    pub const fn standard() -> Self {
        use BloodType::*;
        // Written out by hand; the unit tests check it against the antigen rule.
        const fn set(types: &[BloodType]) -> BloodTypeSet {
            let mut bits = 0u8;
            let mut i = 0;
            while i < types.len() {
                bits |= 1 << (types[i] as u8);
                i += 1;
            }
            BloodTypeSet(bits)
        }
        CompatibilityMatrix {
            donors_for: [
                set(&[OPos, ONeg]),
                set(&[APos, ANeg, OPos, ONeg]),
                set(&[BPos, BNeg, OPos, ONeg]),
                set(&[ONeg]),
                set(&[ANeg, ONeg]),
                set(&[OPos, APos, BPos, ONeg, ANeg, AbPos, BNeg, AbNeg]),
                set(&[BNeg, ONeg]),
                set(&[AbNeg, ANeg, BNeg, ONeg]),
            ],
        }
    }

    pub fn donors_for(&self, recipient: BloodType) -> BloodTypeSet {
        self.donors_for[recipient.index()]
    }
}

static STANDARD_MATRIX: CompatibilityMatrix = CompatibilityMatrix::standard();

/// Donor types a recipient of `recipient` can safely receive.
pub fn compatible_donors(recipient: BloodType) -> BloodTypeSet {
    STANDARD_MATRIX.donors_for(recipient)
}

/// Rarity score in 1..=4; lower means rarer.
pub fn rarity_score(t: BloodType) -> u8 {
    match t {
        BloodType::OPos => 4,
        BloodType::APos | BloodType::ONeg => 3,
        BloodType::BPos | BloodType::ANeg => 2,
        BloodType::BNeg | BloodType::AbPos | BloodType::AbNeg => 1,
    }
}

/// Days a unit stays usable after donation.
pub fn shelf_life_days(c: Component) -> i64 {
    match c {
        Component::Rbc => 42,
        Component::Plas => 365,
        Component::Plat => 5,
        Component::Wb => 35,
    }
}

/// Population prevalence of each type, indexed like [`BloodType::ALL`].
pub const TYPE_DISTRIBUTION: [f64; 8] = [0.38, 0.34, 0.09, 0.07, 0.06, 0.03, 0.02, 0.01];

pub fn type_probability(t: BloodType) -> f64 {
    TYPE_DISTRIBUTION[t.index()]
}

/// Inverse-CDF lookup of a uniform draw in [0,1) over the canonical order.
pub fn blood_type_from_uniform(u: f64) -> BloodType {
    let mut acc = 0.0;
    for (t, p) in BloodType::ALL.into_iter().zip(TYPE_DISTRIBUTION) {
        acc += p;
        if u < acc {
            return t;
        }
    }
    // u within rounding of 1.0
    BloodType::AbNeg
}

pub fn sample_blood_type<R: Rng + ?Sized>(rng: &mut R) -> BloodType {
    blood_type_from_uniform(rng.gen::<f64>())
}
