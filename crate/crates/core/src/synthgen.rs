//! Seeded synthetic dataset: blood banks, users, initial inventory and the
//! donation log that produced it.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{sample_blood_type, shelf_life_days, BloodType, Component};
use crate::error::{Error, Result};

/// Side length of the square plane banks and users live on.
pub const PLANE_SIZE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub fn new(x: f64, y: f64) -> Self {
        Coord { x, y }
    }

    pub fn distance(&self, other: &Coord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn in_plane(&self) -> bool {
        (0.0..=PLANE_SIZE).contains(&self.x) && (0.0..=PLANE_SIZE).contains(&self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloodBank {
    pub bank_id: u32,
    pub name: String,
    pub zip: String,
    pub coord: Coord,
    pub contact: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Donor,
    Patient,
    Both,
}

impl Role {
    pub fn donates(self) -> bool {
        matches!(self, Role::Donor | Role::Both)
    }

    pub fn requests(self) -> bool {
        matches!(self, Role::Patient | Role::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub user_id: u32,
    pub role: Role,
    pub blood_type: BloodType,
    pub zip: String,
    pub coord: Coord,
    pub name: String,
    pub phone: String,
    pub email: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryBatch {
    pub batch_id: String,
    pub bank_id: u32,
    pub blood_type: BloodType,
    pub component: Component,
    pub quantity: u32,
    pub expiration_date: NaiveDate,
}

impl InventoryBatch {
    /// Usable on `date`; a unit stays usable through its expiration date.
    pub fn usable_on(&self, date: NaiveDate) -> bool {
        self.expiration_date >= date
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    Donation,
    Request,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "accepted")]
    Accepted,
    #[serde(rename = "denied")]
    Denied,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub tx_id: String,
    pub kind: TxKind,
    pub user_id: u32,
    pub bank_id: u32,
    pub blood_type: BloodType,
    pub component: Component,
    pub quantity: u32,
    pub date: NaiveDate,
    pub outcome: Outcome,
    pub distance: f64,
    pub batch_ids: Vec<String>,
}

impl TransactionRecord {
    /// Checks the outcome/batch linkage rules of a single record.
    pub fn validate(&self) -> Result<()> {
        let linked = !self.batch_ids.is_empty();
        match (self.kind, self.outcome) {
            (TxKind::Donation, Outcome::Accepted) if linked => {}
            (TxKind::Donation, _) => {
                return Err(Error::Validation(format!(
                    "{}: donations must be accepted and reference a batch",
                    self.tx_id
                )))
            }
            (TxKind::Request, Outcome::Accepted) if linked => {}
            (TxKind::Request, Outcome::Denied) if !linked => {}
            (TxKind::Request, _) => {
                return Err(Error::Validation(format!(
                    "{}: requests are accepted with batches or denied without",
                    self.tx_id
                )))
            }
        }
        if self.quantity == 0 {
            return Err(Error::Validation(format!("{}: zero quantity", self.tx_id)));
        }
        if !(self.distance.is_finite() && self.distance >= 0.0) {
            return Err(Error::Validation(format!("{}: bad distance", self.tx_id)));
        }
        Ok(())
    }
}

pub fn validate_zip(zip: &str) -> Result<()> {
    if zip.len() == 5 && zip.bytes().all(|b| b.is_ascii_digit()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("zip must be 5 digits, got {zip:?}")))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic pseudo-geocoding of a ZIP code onto the synthetic plane.
pub fn zip_to_coord(zip: &str, seed: u64) -> Result<Coord> {
    validate_zip(zip)?;
    let code: u64 = zip.parse().expect("validated digits");
    let h1 = splitmix64(splitmix64(seed) ^ code);
    let h2 = splitmix64(h1);
    Ok(Coord::new(
        unit_interval(h1) * PLANE_SIZE,
        unit_interval(h2) * PLANE_SIZE,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_banks: u32,
    pub n_users: u32,
    pub n_seed_transactions: u32,
    /// First simulation day; seed donations fall in the window before it.
    pub start_date: NaiveDate,
    pub seed_window_days: u32,
    pub role_probabilities: RoleProbabilities,
    pub seed: u64,
}

/// Probabilities of donor / patient / both, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleProbabilities {
    pub donor: f64,
    pub patient: f64,
    pub both: f64,
}

impl Default for RoleProbabilities {
    fn default() -> Self {
        RoleProbabilities {
            donor: 0.45,
            patient: 0.45,
            both: 0.10,
        }
    }
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_banks: 20,
            n_users: 1000,
            n_seed_transactions: 4200,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            seed_window_days: 60,
            role_probabilities: RoleProbabilities::default(),
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_banks", self.n_banks),
            ("n_users", self.n_users),
            ("n_seed_transactions", self.n_seed_transactions),
            ("seed_window_days", self.seed_window_days),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("{field} must be positive")));
            }
        }
        if self.n_banks > 90_000 {
            return Err(Error::Validation("n_banks exceeds the zip code space".into()));
        }
        let p = self.role_probabilities;
        if [p.donor, p.patient, p.both].iter().any(|v| !(0.0..=1.0).contains(v))
            || (p.donor + p.patient + p.both - 1.0).abs() > 1e-9
        {
            return Err(Error::Validation(
                "role_probabilities must be in [0,1] and sum to 1".into(),
            ));
        }
        if p.donor + p.both == 0.0 {
            return Err(Error::Validation("role_probabilities allow no donors".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub banks: Vec<BloodBank>,
    pub users: Vec<User>,
    pub inventory: Vec<InventoryBatch>,
    pub transactions: Vec<TransactionRecord>,
}

pub const BANKS_FILE: &str = "banks.jsonl";
pub const USERS_FILE: &str = "users.jsonl";
pub const INVENTORY_FILE: &str = "inventory.jsonl";
pub const TRANSACTIONS_FILE: &str = "transactions.jsonl";

const FIRST_NAMES: &[&str] = &[
    "Amara", "Ben", "Carla", "Dmitri", "Elena", "Farid", "Grace", "Hugo", "Ines", "Jonah",
    "Keiko", "Luis", "Maya", "Nikos", "Olga", "Priya", "Quinn", "Rosa", "Sami", "Tariq",
    "Uma", "Victor", "Wen", "Ximena", "Yusuf", "Zoe",
];

const LAST_NAMES: &[&str] = &[
    "Adams", "Baker", "Costa", "Diallo", "Evans", "Fischer", "Garcia", "Haddad", "Ito",
    "Jensen", "Kowalski", "Lopez", "Mensah", "Nakamura", "Okafor", "Papadakis", "Quispe",
    "Rossi", "Silva", "Tanaka", "Usman", "Varga", "Wright", "Yilmaz", "Zhang",
];

const PLACE_NAMES: &[&str] = &[
    "Riverside", "Hillcrest", "Lakeview", "Oakwood", "Maplewood", "Fairview", "Brookside",
    "Cedar Park", "Springfield", "Northgate", "Eastfield", "Westbrook", "Southport",
    "Greenville", "Clearwater", "Ashford", "Pinecrest", "Stonebridge", "Harbor City",
    "Kingston",
];

const MAIL_DOMAINS: &[&str] = &["example.org", "example.net", "mail.example.com"];

fn random_zip<R: Rng>(rng: &mut R) -> String {
    format!("{:05}", rng.gen_range(10_000..100_000u32))
}

fn random_phone<R: Rng>(rng: &mut R) -> String {
    format!(
        "555-{:03}-{:04}",
        rng.gen_range(100..1000u32),
        rng.gen_range(0..10_000u32)
    )
}

fn pick<'a, R: Rng>(rng: &mut R, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("non-empty word list")
}

fn sample_role<R: Rng>(rng: &mut R, p: RoleProbabilities) -> Role {
    let u: f64 = rng.gen();
    if u < p.donor {
        Role::Donor
    } else if u < p.donor + p.patient {
        Role::Patient
    } else {
        Role::Both
    }
}

pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut used_zips = std::collections::HashSet::new();
    let mut banks = Vec::with_capacity(cfg.n_banks as usize);
    for bank_id in 1..=cfg.n_banks {
        let zip = loop {
            let z = random_zip(&mut rng);
            if used_zips.insert(z.clone()) {
                break z;
            }
        };
        let place = pick(&mut rng, PLACE_NAMES);
        banks.push(BloodBank {
            bank_id,
            name: format!("{place} Blood Center {bank_id}"),
            coord: zip_to_coord(&zip, cfg.seed)?,
            zip,
            contact: random_phone(&mut rng),
        });
    }

    let mut users = Vec::with_capacity(cfg.n_users as usize);
    for user_id in 1..=cfg.n_users {
        let role = sample_role(&mut rng, cfg.role_probabilities);
        let blood_type = sample_blood_type(&mut rng);
        let zip = random_zip(&mut rng);
        let first = pick(&mut rng, FIRST_NAMES);
        let last = pick(&mut rng, LAST_NAMES);
        let domain = pick(&mut rng, MAIL_DOMAINS);
        users.push(User {
            user_id,
            role,
            blood_type,
            coord: zip_to_coord(&zip, cfg.seed)?,
            zip,
            name: format!("{first} {last}"),
            phone: random_phone(&mut rng),
            email: format!(
                "{}.{}{}@{domain}",
                first.to_lowercase(),
                last.to_lowercase(),
                user_id
            ),
        });
    }
    if !users.iter().any(|u| u.role.donates()) {
        users[0].role = Role::Both;
    }

    let donors: Vec<usize> = (0..users.len()).filter(|&i| users[i].role.donates()).collect();

    struct SeedDonation {
        day: u32,
        user: usize,
        bank: usize,
        component: Component,
    }
    let mut events: Vec<SeedDonation> = (0..cfg.n_seed_transactions)
        .map(|_| SeedDonation {
            day: rng.gen_range(0..cfg.seed_window_days),
            user: *donors.choose(&mut rng).expect("at least one donor"),
            bank: rng.gen_range(0..banks.len()),
            component: *Component::ALL.choose(&mut rng).expect("four components"),
        })
        .collect();
    events.sort_by_key(|e| e.day);

    let window_start = cfg.start_date - Duration::days(cfg.seed_window_days as i64);
    let mut inventory: Vec<InventoryBatch> = Vec::new();
    let mut batch_index: HashMap<(u32, BloodType, Component, NaiveDate), usize> = HashMap::new();
    let mut transactions = Vec::with_capacity(events.len());

    for (n, ev) in events.iter().enumerate() {
        let user = &users[ev.user];
        let bank = &banks[ev.bank];
        let date = window_start + Duration::days(ev.day as i64);
        let key = (bank.bank_id, user.blood_type, ev.component, date);
        let idx = *batch_index.entry(key).or_insert_with(|| {
            inventory.push(InventoryBatch {
                batch_id: format!("B{:06}", inventory.len() + 1),
                bank_id: bank.bank_id,
                blood_type: user.blood_type,
                component: ev.component,
                quantity: 0,
                expiration_date: date + Duration::days(shelf_life_days(ev.component)),
            });
            inventory.len() - 1
        });
        inventory[idx].quantity += 1;
        transactions.push(TransactionRecord {
            tx_id: format!("T{:06}", n + 1),
            kind: TxKind::Donation,
            user_id: user.user_id,
            bank_id: bank.bank_id,
            blood_type: user.blood_type,
            component: ev.component,
            quantity: 1,
            date,
            outcome: Outcome::Accepted,
            distance: user.coord.distance(&bank.coord),
            batch_ids: vec![inventory[idx].batch_id.clone()],
        });
    }

    Ok(Dataset {
        banks,
        users,
        inventory,
        transactions,
    })
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?);
    }
    Ok(out)
}

impl Dataset {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_jsonl(&dir.join(BANKS_FILE), &self.banks)?;
        write_jsonl(&dir.join(USERS_FILE), &self.users)?;
        write_jsonl(&dir.join(INVENTORY_FILE), &self.inventory)?;
        write_jsonl(&dir.join(TRANSACTIONS_FILE), &self.transactions)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let ds = Dataset {
            banks: read_jsonl(&dir.join(BANKS_FILE))?,
            users: read_jsonl(&dir.join(USERS_FILE))?,
            inventory: read_jsonl(&dir.join(INVENTORY_FILE))?,
            transactions: read_jsonl(&dir.join(TRANSACTIONS_FILE))?,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Referential integrity and per-record invariants.
    pub fn validate(&self) -> Result<()> {
        if self.banks.is_empty() {
            return Err(Error::Validation("dataset has no banks".into()));
        }
        let mut bank_ids = std::collections::HashSet::new();
        for b in &self.banks {
            validate_zip(&b.zip)?;
            if !b.coord.in_plane() {
                return Err(Error::Validation(format!("bank {} outside plane", b.bank_id)));
            }
            if !bank_ids.insert(b.bank_id) {
                return Err(Error::Validation(format!("duplicate bank_id {}", b.bank_id)));
            }
        }
        let mut user_ids = std::collections::HashSet::new();
        for u in &self.users {
            validate_zip(&u.zip)?;
            if !user_ids.insert(u.user_id) {
                return Err(Error::Validation(format!("duplicate user_id {}", u.user_id)));
            }
        }
        let mut batch_ids = std::collections::HashSet::new();
        for b in &self.inventory {
            if !bank_ids.contains(&b.bank_id) {
                return Err(Error::Validation(format!(
                    "batch {} references unknown bank {}",
                    b.batch_id, b.bank_id
                )));
            }
            if !batch_ids.insert(b.batch_id.as_str()) {
                return Err(Error::Validation(format!("duplicate batch_id {}", b.batch_id)));
            }
        }
        for t in &self.transactions {
            t.validate()?;
            if !bank_ids.contains(&t.bank_id) || !user_ids.contains(&t.user_id) {
                return Err(Error::Validation(format!("{} has dangling bank or user", t.tx_id)));
            }
            if let Some(b) = t.batch_ids.iter().find(|b| !batch_ids.contains(b.as_str())) {
                return Err(Error::Validation(format!("{} references unknown batch {b}", t.tx_id)));
            }
        }
        Ok(())
    }
}
