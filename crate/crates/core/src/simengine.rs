//! Day-stepped simulation of blood requests and donations across a bank
//! network.
//!
//! Each day expired units are purged, then 40–50 events are drawn; each is a
//! request (served according to the allocation [`Policy`]) or a donation
//! (routed to a bank and stocked as a new batch). Every event becomes a
//! [`TransactionRecord`] in the store.
//!
//! Two independent random streams are derived from the scenario seed: one
//! drives the event stream (who, what, when) and one drives policy choices
//! (the random bank choice). Runs of different policies with the same seed
//! therefore see the same users, types and components.

use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{compatible_donors, rarity_score, shelf_life_days, BloodType, Component};
use crate::error::{Error, Result};
use crate::stats::RunSummary;
use crate::store::{Record, Store};
use crate::synthgen::{
    BloodBank, Coord, Dataset, InventoryBatch, Outcome, TransactionRecord, TxKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Random,
    HeuristicProximityExpiry,
    HeuristicRarity,
}

impl Policy {
    pub const ALL: [Policy; 3] = [
        Policy::Random,
        Policy::HeuristicProximityExpiry,
        Policy::HeuristicRarity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::HeuristicProximityExpiry => "heuristic_proximity_expiry",
            Policy::HeuristicRarity => "heuristic_rarity",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown policy {s:?} (expected random, heuristic_proximity_expiry or heuristic_rarity)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub start_date: NaiveDate,
    pub n_days: u32,
    /// Inclusive bounds on the number of events per day.
    pub daily_events: (u32, u32),
    pub request_probability: f64,
    pub proximity_fraction: f64,
    pub policy: Policy,
    pub request_quantity: u32,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            n_days: 30,
            daily_events: (40, 50),
            request_probability: 0.5,
            proximity_fraction: 0.15,
            policy: Policy::HeuristicRarity,
            request_quantity: 1,
            seed: 42,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days < 1 {
            return Err(Error::Validation("n_days must be at least 1".into()));
        }
        if !(self.proximity_fraction > 0.0 && self.proximity_fraction <= 1.0) {
            return Err(Error::Validation("proximity_fraction must be in (0, 1]".into()));
        }
        if !(self.request_probability > 0.0 && self.request_probability < 1.0) {
            return Err(Error::Validation("request_probability must be in (0, 1)".into()));
        }
        if self.daily_events.0 > self.daily_events.1 {
            return Err(Error::Validation("daily_events lower bound exceeds upper bound".into()));
        }
        if self.request_quantity < 1 {
            return Err(Error::Validation("request_quantity must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cumulative acceptance ratio of one bank, one value per simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSeries {
    pub bank_id: u32,
    pub values: Vec<f64>,
}

/// Unit flows over a run; `initial + donated - dispensed - expired = final`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UnitLedger {
    pub initial: u64,
    pub donated: u64,
    pub dispensed: u64,
    pub expired: u64,
    #[serde(rename = "final")]
    pub final_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: Policy,
    pub seed: u64,
    pub n_days: u32,
    pub accepted: u64,
    pub denied: u64,
    pub acceptance_ratio: f64,
    pub total_distance: f64,
    pub expired_units: u64,
    pub ledger: UnitLedger,
    pub per_bank_daily: Vec<AcceptanceSeries>,
    pub transactions: Vec<TransactionRecord>,
}

impl SimReport {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            policy: self.policy.to_string(),
            accepted: self.accepted,
            denied: self.denied,
            acceptance_ratio: self.acceptance_ratio,
            total_distance: self.total_distance,
            expired_units: self.expired_units,
        }
    }

    /// Rows of `bank_id,day,ratio` with a header line; days are 1-based.
    pub fn acceptance_csv(&self) -> String {
        let mut out = String::from("bank_id,day,ratio\n");
        for s in &self.per_bank_daily {
            for (day, v) in s.values.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", s.bank_id, day + 1, v));
            }
        }
        out
    }
}

/// Zeroes every batch whose expiration date is before `date` and returns
/// the number of units removed. Call with non-decreasing dates.
pub fn purge_expired(store: &mut Store, date: NaiveDate) -> Result<u64> {
    let expired: Vec<(String, u32)> = store
        .batches()
        .filter(|b| b.quantity > 0 && !b.usable_on(date))
        .map(|b| (b.batch_id.clone(), b.quantity))
        .collect();
    let mut removed = 0u64;
    for (id, qty) in expired {
        store.apply_inventory_delta(&id, -(qty as i64))?;
        removed += qty as u64;
    }
    Ok(removed)
}

fn by_distance(origin: &Coord, banks: &[BloodBank]) -> Vec<(f64, u32)> {
    let mut ranked: Vec<(f64, u32)> = banks
        .iter()
        .map(|b| (origin.distance(&b.coord), b.bank_id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked
}

/// Number of banks kept by a proximity fraction: `ceil(fraction * n)`, at least one.
pub fn candidate_count(fraction: f64, n: usize) -> usize {
    // The epsilon absorbs representation error, e.g. 0.15 * 20.
    (((fraction * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

/// The `ceil(fraction × |banks|)` nearest banks, nearest first; equal
/// distances are ordered by bank id.
pub fn candidate_banks(user_coord: &Coord, banks: &[BloodBank], fraction: f64) -> Vec<u32> {
    if banks.is_empty() {
        return Vec::new();
    }
    let k = candidate_count(fraction, banks.len());
    by_distance(user_coord, banks)
        .into_iter()
        .take(k)
        .map(|(_, id)| id)
        .collect()
}

pub fn nearest_bank(user_coord: &Coord, banks: &[BloodBank]) -> Option<u32> {
    by_distance(user_coord, banks).first().map(|&(_, id)| id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BloodRequest {
    pub user_id: u32,
    pub coord: Coord,
    pub blood_type: BloodType,
    pub component: Component,
    pub quantity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draw {
    pub batch_id: String,
    pub blood_type: BloodType,
    pub units: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub bank_id: u32,
    pub draws: Vec<Draw>,
    /// Type of the first batch drawn.
    pub served_blood_type: BloodType,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Allocation {
    Accepted(AllocationDecision),
    Denied,
}

/// Takes `quantity` units from `batches` in the given order, if they suffice.
fn draw_in_order<'a>(
    bank_id: u32,
    batches: impl Iterator<Item = &'a InventoryBatch>,
    quantity: u32,
) -> Option<AllocationDecision> {
    let mut remaining = quantity;
    let mut draws = Vec::new();
    for b in batches {
        if remaining == 0 {
            break;
        }
        let units = b.quantity.min(remaining);
        draws.push(Draw {
            batch_id: b.batch_id.clone(),
            blood_type: b.blood_type,
            units,
        });
        remaining -= units;
    }
    (remaining == 0).then(|| AllocationDecision {
        bank_id,
        served_blood_type: draws[0].blood_type,
        draws,
    })
}

/// Compatible donor types ordered for the rarity policy: most common
/// (highest score) first, ties in canonical order.
pub fn rarity_preference(recipient: BloodType) -> Vec<BloodType> {
    let mut types: Vec<BloodType> = compatible_donors(recipient).iter().collect();
    types.sort_by_key(|t| std::cmp::Reverse(rarity_score(*t)));
    types
}

/// Chooses a bank and batches for a request without touching the store.
/// The store should already be purged for `date`.
///
/// * `Random`: one bank drawn uniformly (`rng.gen_range` over `banks`);
///   served only from batches of the exact requested type.
/// * `HeuristicProximityExpiry`: candidate banks in proximity order; the
///   first one whose compatible batches cover the quantity serves it,
///   drawing strictly by expiration date across types.
/// * `HeuristicRarity`: candidate banks in proximity order; within a bank
///   the first type in [`rarity_preference`] order that alone covers the
///   quantity serves it, expiry-ascending.
///
/// Only live batches (positive quantity, not expired on `date`, matching
/// component) are eligible. Batch order ties resolve by batch id.
pub fn select_allocation<R: Rng + ?Sized>(
    policy: Policy,
    request: &BloodRequest,
    store: &Store,
    date: NaiveDate,
    banks: &[BloodBank],
    proximity_fraction: f64,
    rng: &mut R,
) -> Result<Allocation> {
    if request.quantity < 1 {
        return Err(Error::Validation("request quantity must be at least 1".into()));
    }
    let live = |b: &&InventoryBatch| {
        b.quantity > 0 && b.usable_on(date) && b.component == request.component
    };
    match policy {
        Policy::Random => {
            let bank_id = banks[rng.gen_range(0..banks.len())].bank_id;
            let batches = store
                .bank_batches(bank_id)?
                .filter(live)
                .filter(|b| b.blood_type == request.blood_type);
            if let Some(d) = draw_in_order(bank_id, batches, request.quantity) {
                return Ok(Allocation::Accepted(d));
            }
        }
        Policy::HeuristicProximityExpiry => {
            let donors = compatible_donors(request.blood_type);
            for bank_id in candidate_banks(&request.coord, banks, proximity_fraction) {
                let batches = store
                    .bank_batches(bank_id)?
                    .filter(live)
                    .filter(|b| donors.contains(b.blood_type));
                if let Some(d) = draw_in_order(bank_id, batches, request.quantity) {
                    return Ok(Allocation::Accepted(d));
                }
            }
        }
        Policy::HeuristicRarity => {
            let preference = rarity_preference(request.blood_type);
            for bank_id in candidate_banks(&request.coord, banks, proximity_fraction) {
                for &t in &preference {
                    let batches = store
                        .bank_batches(bank_id)?
                        .filter(live)
                        .filter(|b| b.blood_type == t);
                    if let Some(d) = draw_in_order(bank_id, batches, request.quantity) {
                        return Ok(Allocation::Accepted(d));
                    }
                }
            }
        }
    }
    Ok(Allocation::Denied)
}

/// Random policy: a uniformly random bank. Heuristic policies: the nearest
/// bank, lowest id on ties.
pub fn select_donation_bank<R: Rng + ?Sized>(
    policy: Policy,
    user_coord: &Coord,
    banks: &[BloodBank],
    rng: &mut R,
) -> Result<u32> {
    if banks.is_empty() {
        return Err(Error::Validation("no banks to donate to".into()));
    }
    Ok(match policy {
        Policy::Random => banks[rng.gen_range(0..banks.len())].bank_id,
        Policy::HeuristicProximityExpiry | Policy::HeuristicRarity => {
            nearest_bank(user_coord, banks).expect("non-empty")
        }
    })
}

const EVENT_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Loads `dataset` into a private in-memory store and runs the scenario.
pub fn run_simulation(cfg: &ScenarioConfig, dataset: &Dataset) -> Result<SimReport> {
    cfg.validate()?;
    dataset.validate()?;
    let mut store = Store::from_dataset(dataset, None)?;
    run_on_store(cfg, &mut store)
}

/// Runs the scenario against an existing store, appending every
/// transaction and inventory change to it.
pub fn run_on_store(cfg: &ScenarioConfig, store: &mut Store) -> Result<SimReport> {
    cfg.validate()?;
    let banks: Vec<BloodBank> = store.banks().cloned().collect();
    if banks.is_empty() {
        return Err(Error::Validation("store has no banks".into()));
    }
    let bank_index = |id: u32| banks.iter().position(|b| b.bank_id == id).expect("known bank");
    let patients: Vec<(u32, Coord, BloodType)> = store
        .users()
        .filter(|u| u.role.requests())
        .map(|u| (u.user_id, u.coord, u.blood_type))
        .collect();
    let donors: Vec<(u32, Coord, BloodType)> = store
        .users()
        .filter(|u| u.role.donates())
        .map(|u| (u.user_id, u.coord, u.blood_type))
        .collect();
    if patients.is_empty() || donors.is_empty() {
        return Err(Error::Validation("need at least one patient and one donor".into()));
    }
    // Requests are attributed to the requester's nearest bank for the daily series.
    let home_bank: std::collections::HashMap<u32, usize> = patients
        .iter()
        .map(|(id, c, _)| (*id, bank_index(nearest_bank(c, &banks).expect("banks"))))
        .collect();

    let mut events = stream_rng(cfg.seed, EVENT_STREAM);
    let mut choices = stream_rng(cfg.seed, POLICY_STREAM);

    let mut ledger = UnitLedger {
        initial: store.batches().map(|b| b.quantity as u64).sum(),
        ..UnitLedger::default()
    };
    let mut accepted = 0u64;
    let mut denied = 0u64;
    let mut total_distance = 0.0;
    let mut transactions = Vec::new();
    let mut cum_accepted = vec![0u64; banks.len()];
    let mut cum_requests = vec![0u64; banks.len()];
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n_days as usize); banks.len()];
    let mut next_tx = 0u64;
    let mut next_batch = 0u64;

    for day in 0..cfg.n_days {
        let date = cfg.start_date + Duration::days(day as i64);
        store.set_current_date(date);
        ledger.expired += purge_expired(store, date)?;

        let n_events = events.gen_range(cfg.daily_events.0..=cfg.daily_events.1);
        for _ in 0..n_events {
            let is_request = events.gen::<f64>() < cfg.request_probability;
            next_tx += 1;
            let tx_id = format!("S{next_tx:07}");
            if is_request {
                let (user_id, coord, blood_type) = patients[events.gen_range(0..patients.len())];
                let component = *Component::ALL.choose(&mut events).expect("components");
                let request = BloodRequest {
                    user_id,
                    coord,
                    blood_type,
                    component,
                    quantity: cfg.request_quantity,
                };
                let home = home_bank[&user_id];
                cum_requests[home] += 1;
                let decision = select_allocation(
                    cfg.policy,
                    &request,
                    store,
                    date,
                    &banks,
                    cfg.proximity_fraction,
                    &mut choices,
                )?;
                let tx = match decision {
                    Allocation::Accepted(d) => {
                        for draw in &d.draws {
                            store.apply_inventory_delta(&draw.batch_id, -(draw.units as i64))?;
                        }
                        let distance = coord.distance(&banks[bank_index(d.bank_id)].coord);
                        accepted += 1;
                        cum_accepted[home] += 1;
                        total_distance += distance;
                        ledger.dispensed += request.quantity as u64;
                        TransactionRecord {
                            tx_id,
                            kind: TxKind::Request,
                            user_id,
                            bank_id: d.bank_id,
                            blood_type,
                            component,
                            quantity: request.quantity,
                            date,
                            outcome: Outcome::Accepted,
                            distance,
                            batch_ids: d.draws.into_iter().map(|dr| dr.batch_id).collect(),
                        }
                    }
                    Allocation::Denied => {
                        denied += 1;
                        TransactionRecord {
                            tx_id,
                            kind: TxKind::Request,
                            user_id,
                            bank_id: banks[home].bank_id,
                            blood_type,
                            component,
                            quantity: request.quantity,
                            date,
                            outcome: Outcome::Denied,
                            distance: 0.0,
                            batch_ids: Vec::new(),
                        }
                    }
                };
                store.insert_record(Record::Transaction(tx.clone()))?;
                transactions.push(tx);
            } else {
                let (user_id, coord, blood_type) = donors[events.gen_range(0..donors.len())];
                let component = *Component::ALL.choose(&mut events).expect("components");
                let bank_id = select_donation_bank(cfg.policy, &coord, &banks, &mut choices)?;
                let distance = coord.distance(&banks[bank_index(bank_id)].coord);
                next_batch += 1;
                let batch = InventoryBatch {
                    batch_id: format!("SB{next_batch:07}"),
                    bank_id,
                    blood_type,
                    component,
                    quantity: 1,
                    expiration_date: date + Duration::days(shelf_life_days(component)),
                };
                let tx = TransactionRecord {
                    tx_id,
                    kind: TxKind::Donation,
                    user_id,
                    bank_id,
                    blood_type,
                    component,
                    quantity: 1,
                    date,
                    outcome: Outcome::Accepted,
                    distance,
                    batch_ids: vec![batch.batch_id.clone()],
                };
                store.insert_record(Record::Batch(batch))?;
                store.insert_record(Record::Transaction(tx.clone()))?;
                total_distance += distance;
                ledger.donated += 1;
                transactions.push(tx);
            }
        }

        for (i, s) in series.iter_mut().enumerate() {
            let value = if cum_requests[i] == 0 {
                s.last().copied().unwrap_or(1.0)
            } else {
                cum_accepted[i] as f64 / cum_requests[i] as f64
            };
            s.push(value);
        }
    }
    store.flush()?;

    ledger.final_units = store.batches().map(|b| b.quantity as u64).sum();
    let requests = accepted + denied;
    Ok(SimReport {
        policy: cfg.policy,
        seed: cfg.seed,
        n_days: cfg.n_days,
        accepted,
        denied,
        // No requests leaves the ratio at its initial value of 1.
        acceptance_ratio: if requests == 0 { 1.0 } else { accepted as f64 / requests as f64 },
        total_distance,
        expired_units: ledger.expired,
        ledger,
        per_bank_daily: banks
            .iter()
            .zip(series)
            .map(|(b, values)| AcceptanceSeries {
                bank_id: b.bank_id,
                values,
            })
            .collect(),
        transactions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_dataset, GenConfig};

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, d).unwrap()
    }

    fn bank_at(id: u32, x: f64, y: f64) -> BloodBank {
        BloodBank {
            bank_id: id,
            name: format!("Bank {id}"),
            zip: format!("{:05}", 10000 + id),
            coord: Coord::new(x, y),
            contact: String::new(),
        }
    }

    fn store_with(banks: &[BloodBank], batches: &[(&str, u32, BloodType, Component, u32, NaiveDate)]) -> Store {
        let mut s = Store::in_memory();
        for b in banks {
            s.insert_record(Record::Bank(b.clone())).unwrap();
        }
        for &(id, bank_id, t, c, q, exp) in batches {
            s.insert_record(Record::Batch(InventoryBatch {
                batch_id: id.into(),
                bank_id,
                blood_type: t,
                component: c,
                quantity: q,
                expiration_date: exp,
            }))
            .unwrap();
        }
        s
    }

    fn request(t: BloodType, c: Component) -> BloodRequest {
        BloodRequest {
            user_id: 1,
            coord: Coord::new(0.0, 0.0),
            blood_type: t,
            component: c,
            quantity: 1,
        }
    }

    #[test]
    fn expiry_date_itself_is_usable() {
        let banks = [bank_at(1, 0.0, 0.0)];
        let mut s = store_with(&banks, &[("a", 1, BloodType::OPos, Component::Rbc, 2, date(10))]);
        assert_eq!(purge_expired(&mut s, date(10)).unwrap(), 0);
        assert_eq!(s.batch("a").unwrap().quantity, 2);
        assert_eq!(purge_expired(&mut s, date(11)).unwrap(), 2);
        assert_eq!(s.batch("a").unwrap().quantity, 0);
        assert_eq!(purge_expired(&mut s, date(12)).unwrap(), 0);
    }

    #[test]
    fn platelets_purged_six_days_after_donation() {
        let donated = date(3);
        let exp = donated + Duration::days(shelf_life_days(Component::Plat));
        let banks = [bank_at(1, 0.0, 0.0)];
        let mut s = store_with(&banks, &[("p", 1, BloodType::OPos, Component::Plat, 1, exp)]);
        for d in 3..=8 {
            assert_eq!(purge_expired(&mut s, date(d)).unwrap(), 0, "day {d}");
        }
        assert_eq!(purge_expired(&mut s, date(9)).unwrap(), 1);
    }

    #[test]
    fn candidate_selection() {
        let banks: Vec<BloodBank> = (1..=20).map(|i| bank_at(i, i as f64 * 10.0, 0.0)).collect();
        let origin = Coord::new(0.0, 0.0);
        assert_eq!(candidate_banks(&origin, &banks, 0.15), vec![1, 2, 3]);
        assert_eq!(candidate_banks(&origin, &banks, 1.0).len(), 20);
        assert_eq!(candidate_count(0.3, 7), 3);
        assert_eq!(candidate_count(0.01, 7), 1);
        // Ties by id.
        let tied = [bank_at(5, 1.0, 0.0), bank_at(2, 0.0, 1.0)];
        assert_eq!(candidate_banks(&origin, &tied, 1.0), vec![2, 5]);
    }

    #[test]
    fn heuristic_serves_universal_donor() {
        let banks = [bank_at(1, 1.0, 1.0)];
        let s = store_with(&banks, &[("o", 1, BloodType::ONeg, Component::Wb, 1, date(20))]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = select_allocation(
            Policy::HeuristicProximityExpiry,
            &request(BloodType::AbPos, Component::Wb),
            &s,
            date(1),
            &banks,
            0.15,
            &mut rng,
        )
        .unwrap();
        match got {
            Allocation::Accepted(d) => assert_eq!(d.served_blood_type, BloodType::ONeg),
            Allocation::Denied => panic!("expected acceptance"),
        }
    }

    #[test]
    fn rarity_prefers_common_type() {
        let banks = [bank_at(1, 1.0, 1.0)];
        let s = store_with(
            &banks,
            &[
                ("neg", 1, BloodType::ONeg, Component::Plas, 3, date(5)),
                ("pos", 1, BloodType::OPos, Component::Plas, 3, date(25)),
            ],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let req = request(BloodType::OPos, Component::Plas);
        let Allocation::Accepted(d) =
            select_allocation(Policy::HeuristicRarity, &req, &s, date(1), &banks, 0.15, &mut rng).unwrap()
        else {
            panic!("denied")
        };
        assert_eq!(d.served_blood_type, BloodType::OPos);
        // The expiry policy takes the sooner-expiring O- instead.
        let Allocation::Accepted(d) = select_allocation(
            Policy::HeuristicProximityExpiry,
            &req,
            &s,
            date(1),
            &banks,
            0.15,
            &mut rng,
        )
        .unwrap() else {
            panic!("denied")
        };
        assert_eq!(d.served_blood_type, BloodType::ONeg);
    }

    #[test]
    fn random_requires_exact_type() {
        let banks = [bank_at(1, 1.0, 1.0), bank_at(2, 5.0, 5.0)];
        let s = store_with(&banks, &[("o", 2, BloodType::ONeg, Component::Rbc, 4, date(20))]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let got = select_allocation(
            Policy::Random,
            &request(BloodType::ANeg, Component::Rbc),
            &s,
            date(1),
            &banks,
            0.15,
            &mut rng,
        )
        .unwrap();
        assert_eq!(got, Allocation::Denied);
    }

    #[test]
    fn multi_unit_draws_follow_expiry() {
        let banks = [bank_at(1, 1.0, 1.0)];
        let s = store_with(
            &banks,
            &[
                ("late", 1, BloodType::APos, Component::Rbc, 5, date(30)),
                ("early", 1, BloodType::APos, Component::Rbc, 2, date(9)),
                ("gone", 1, BloodType::APos, Component::Rbc, 9, date(2)),
            ],
        );
        let mut req = request(BloodType::APos, Component::Rbc);
        req.quantity = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let Allocation::Accepted(d) =
            select_allocation(Policy::Random, &req, &s, date(5), &banks, 1.0, &mut rng).unwrap()
        else {
            panic!("denied")
        };
        let draws: Vec<(&str, u32)> = d.draws.iter().map(|d| (d.batch_id.as_str(), d.units)).collect();
        assert_eq!(draws, vec![("early", 2), ("late", 2)]);
    }

    #[test]
    fn donation_bank_selection() {
        let banks = [bank_at(1, 1.0, 1.0), bank_at(2, 5.0, 5.0)];
        let origin = Coord::new(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            select_donation_bank(Policy::HeuristicRarity, &origin, &banks, &mut rng).unwrap(),
            1
        );
        let a = select_donation_bank(Policy::Random, &origin, &banks, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = select_donation_bank(Policy::Random, &origin, &banks, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let cfg = ScenarioConfig {
            n_days: 0,
            ..ScenarioConfig::default()
        };
        let ds = generate_dataset(&GenConfig::default()).unwrap();
        assert!(matches!(run_simulation(&cfg, &ds), Err(Error::Validation(_))));
        for bad in [
            ScenarioConfig { proximity_fraction: 0.0, ..ScenarioConfig::default() },
            ScenarioConfig { request_probability: 1.0, ..ScenarioConfig::default() },
            ScenarioConfig { daily_events: (50, 40), ..ScenarioConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.as_str().parse::<Policy>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert!("greedy".parse::<Policy>().is_err());
    }

    #[test]
    fn report_basics() {
        let ds = generate_dataset(&GenConfig::default()).unwrap();
        let cfg = ScenarioConfig {
            n_days: 10,
            ..ScenarioConfig::default()
        };
        let r = run_simulation(&cfg, &ds).unwrap();
        assert_eq!(
            r.accepted + r.denied,
            r.transactions.iter().filter(|t| t.kind == TxKind::Request).count() as u64
        );
        assert_eq!(r.per_bank_daily.len(), 20);
        assert!(r.per_bank_daily.iter().all(|s| s.values.len() == 10));
        assert!(r
            .per_bank_daily
            .iter()
            .flat_map(|s| &s.values)
            .all(|v| (0.0..=1.0).contains(v)));
        let l = r.ledger;
        assert_eq!(l.initial + l.donated - l.dispensed - l.expired, l.final_units);
        assert_eq!(r, run_simulation(&cfg, &ds).unwrap());
        let csv = r.acceptance_csv();
        assert_eq!(csv.lines().count(), 1 + 20 * 10);
    }
}
