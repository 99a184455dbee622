//! Partition-keyed table store for banks, users, inventory and transactions.
//!
//! Layout on disk is one JSON-lines segment per table plus a delta log for
//! inventory quantities:
//!
//! ```text
//! <data_dir>/blood_banks.jsonl
//! <data_dir>/users.jsonl
//! <data_dir>/blood_inventory.jsonl
//! <data_dir>/blood_inventory.deltas.jsonl
//! <data_dir>/blood_transactions.jsonl
//! ```
//!
//! Inserts append to the table segment and quantity changes append to the
//! delta log. The partition index lives in memory and is rebuilt on open by
//! replaying both. [`Store::close`] compacts the deltas into the inventory
//! segment.
//!
//! The handle is single-writer: mutation takes `&mut self`, so concurrent
//! readers need a shared lock or a [`Store::snapshot`]. Reads through one
//! handle always observe its own writes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::domain::{BloodType, Component};
use crate::error::{Error, Result};
use crate::synthgen::{
    read_jsonl, validate_zip, BloodBank, Dataset, InventoryBatch, TransactionRecord, User,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table {
    BloodBanks,
    Users,
    BloodInventory,
    BloodTransactions,
}

impl Table {
    pub const ALL: [Table; 4] = [
        Table::BloodBanks,
        Table::Users,
        Table::BloodInventory,
        Table::BloodTransactions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::BloodBanks => "blood_banks",
            Table::Users => "users",
            Table::BloodInventory => "blood_inventory",
            Table::BloodTransactions => "blood_transactions",
        }
    }

    fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const DELTAS_FILE: &str = "blood_inventory.deltas.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Bank(BloodBank),
    User(User),
    Batch(InventoryBatch),
    Transaction(TransactionRecord),
}

impl Record {
    pub fn table(&self) -> Table {
        match self {
            Record::Bank(_) => Table::BloodBanks,
            Record::User(_) => Table::Users,
            Record::Batch(_) => Table::BloodInventory,
            Record::Transaction(_) => Table::BloodTransactions,
        }
    }

    pub fn id(&self) -> String {
        match self {
            Record::Bank(b) => b.bank_id.to_string(),
            Record::User(u) => u.user_id.to_string(),
            Record::Batch(b) => b.batch_id.clone(),
            Record::Transaction(t) => t.tx_id.clone(),
        }
    }
}

/// Bucketing of the transactions table's partition key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DateBucket {
    #[default]
    Day,
    Month,
}

impl DateBucket {
    pub fn key(self, date: NaiveDate) -> String {
        match self {
            DateBucket::Day => date.format("%Y-%m-%d").to_string(),
            DateBucket::Month => format!("{:04}-{:02}", date.year(), date.month()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DeltaEntry {
    batch_id: String,
    delta: i64,
}

#[derive(Debug)]
struct FileBackend {
    dir: PathBuf,
    writers: HashMap<&'static str, BufWriter<File>>,
}

impl FileBackend {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut writers = HashMap::new();
        let names: Vec<(&'static str, String)> = Table::ALL
            .iter()
            .map(|t| (t.name(), t.file_name()))
            .chain(std::iter::once(("deltas", DELTAS_FILE.to_string())))
            .collect();
        for (key, file) in names {
            let f = OpenOptions::new().create(true).append(true).open(dir.join(file))?;
            writers.insert(key, BufWriter::new(f));
        }
        Ok(FileBackend {
            dir: dir.to_path_buf(),
            writers,
        })
    }

    fn append<T: Serialize>(&mut self, key: &'static str, value: &T) -> Result<()> {
        let w = self.writers.get_mut(key).expect("writer per table");
        serde_json::to_writer(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        for w in self.writers.values_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Tables {
    banks: BTreeMap<u32, BloodBank>,
    users: BTreeMap<u32, User>,
    batches: HashMap<String, InventoryBatch>,
    /// Insertion order of batches; compaction writes in this order.
    batch_order: Vec<String>,
    /// bank_id → batches keyed by (expiration_date, batch_id).
    inventory_partitions: BTreeMap<u32, BTreeSet<(NaiveDate, String)>>,
    tx_ids: HashSet<String>,
    tx_partitions: BTreeMap<String, Vec<TransactionRecord>>,
    tx_count: usize,
}

#[derive(Debug)]
pub struct Store {
    tables: Tables,
    bucket: DateBucket,
    current_date: NaiveDate,
    backend: Option<FileBackend>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            tables: Tables::default(),
            bucket: DateBucket::default(),
            current_date: NaiveDate::MIN,
            backend: None,
        }
    }

    pub fn with_bucket(mut self, bucket: DateBucket) -> Self {
        assert_eq!(self.tables.tx_count, 0, "bucket must be chosen before inserts");
        self.bucket = bucket;
        self
    }

    /// Opens (or creates) a file-backed store, replaying segments and deltas.
    pub fn open(dir: &Path) -> Result<Self> {
        Self::open_with_bucket(dir, DateBucket::default())
    }

    pub fn open_with_bucket(dir: &Path, bucket: DateBucket) -> Result<Self> {
        let mut store = Store::in_memory().with_bucket(bucket);
        if dir.exists() {
            let load = |t: Table| dir.join(t.file_name());
            let exists = |p: &Path| p.exists();
            if exists(&load(Table::BloodBanks)) {
                for b in read_jsonl::<BloodBank>(&load(Table::BloodBanks))? {
                    store.insert_record(Record::Bank(b))?;
                }
            }
            if exists(&load(Table::Users)) {
                for u in read_jsonl::<User>(&load(Table::Users))? {
                    store.insert_record(Record::User(u))?;
                }
            }
            if exists(&load(Table::BloodInventory)) {
                for b in read_jsonl::<InventoryBatch>(&load(Table::BloodInventory))? {
                    store.insert_record(Record::Batch(b))?;
                }
            }
            if exists(&load(Table::BloodTransactions)) {
                for t in read_jsonl::<TransactionRecord>(&load(Table::BloodTransactions))? {
                    store.insert_record(Record::Transaction(t))?;
                }
            }
            let deltas = dir.join(DELTAS_FILE);
            if deltas.exists() {
                for d in read_jsonl::<DeltaEntry>(&deltas)? {
                    store.apply_inventory_delta(&d.batch_id, d.delta)?;
                }
            }
        }
        store.backend = Some(FileBackend::open(dir)?);
        Ok(store)
    }

    /// Loads a generated dataset into a fresh store. With `dir` the store is
    /// file-backed there; the directory must not already hold a store.
    pub fn from_dataset(dataset: &Dataset, dir: Option<&Path>) -> Result<Self> {
        let mut store = match dir {
            Some(d) => {
                if Table::ALL.iter().any(|t| d.join(t.file_name()).exists()) {
                    return Err(Error::Validation(format!(
                        "{} already contains a store",
                        d.display()
                    )));
                }
                Store::open(d)?
            }
            None => Store::in_memory(),
        };
        for b in &dataset.banks {
            store.insert_record(Record::Bank(b.clone()))?;
        }
        for u in &dataset.users {
            store.insert_record(Record::User(u.clone()))?;
        }
        for b in &dataset.inventory {
            store.insert_record(Record::Batch(b.clone()))?;
        }
        for t in &dataset.transactions {
            store.insert_record(Record::Transaction(t.clone()))?;
        }
        store.flush()?;
        Ok(store)
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.backend.as_ref().map(|b| b.dir.as_path())
    }

    /// Copy of the in-memory state, detached from any file backend.
    pub fn snapshot(&self) -> Store {
        Store {
            tables: self.tables.clone(),
            bucket: self.bucket,
            current_date: self.current_date,
            backend: None,
        }
    }

    pub fn current_date(&self) -> NaiveDate {
        self.current_date
    }

    /// Sets the as-of date used to exclude expired batches from aggregates.
    pub fn set_current_date(&mut self, date: NaiveDate) {
        self.current_date = date;
    }

    pub fn insert_record(&mut self, record: Record) -> Result<String> {
        let id = record.id();
        let table = record.table();
        let t = &mut self.tables;
        match record {
            Record::Bank(b) => {
                validate_zip(&b.zip)?;
                if !b.coord.in_plane() {
                    return Err(Error::Validation(format!("bank {} outside plane", b.bank_id)));
                }
                if t.banks.contains_key(&b.bank_id) {
                    return Err(Error::Conflict { table: table.name(), id });
                }
                if let Some(be) = self.backend.as_mut() {
                    be.append(table.name(), &b)?;
                }
                t.inventory_partitions.entry(b.bank_id).or_default();
                t.banks.insert(b.bank_id, b);
            }
            Record::User(u) => {
                validate_zip(&u.zip)?;
                if t.users.contains_key(&u.user_id) {
                    return Err(Error::Conflict { table: table.name(), id });
                }
                if let Some(be) = self.backend.as_mut() {
                    be.append(table.name(), &u)?;
                }
                t.users.insert(u.user_id, u);
            }
            Record::Batch(b) => {
                if !t.banks.contains_key(&b.bank_id) {
                    return Err(Error::Validation(format!(
                        "batch {} references unknown bank {}",
                        b.batch_id, b.bank_id
                    )));
                }
                if t.batches.contains_key(&b.batch_id) {
                    return Err(Error::Conflict { table: table.name(), id });
                }
                if let Some(be) = self.backend.as_mut() {
                    be.append(table.name(), &b)?;
                }
                t.inventory_partitions
                    .entry(b.bank_id)
                    .or_default()
                    .insert((b.expiration_date, b.batch_id.clone()));
                t.batch_order.push(b.batch_id.clone());
                t.batches.insert(b.batch_id.clone(), b);
            }
            Record::Transaction(tx) => {
                tx.validate()?;
                if !t.banks.contains_key(&tx.bank_id) || !t.users.contains_key(&tx.user_id) {
                    return Err(Error::Validation(format!(
                        "{} references unknown bank or user",
                        tx.tx_id
                    )));
                }
                if let Some(b) = tx.batch_ids.iter().find(|b| !t.batches.contains_key(*b)) {
                    return Err(Error::Validation(format!(
                        "{} references unknown batch {b}",
                        tx.tx_id
                    )));
                }
                if t.tx_ids.contains(&tx.tx_id) {
                    return Err(Error::Conflict { table: table.name(), id });
                }
                if let Some(be) = self.backend.as_mut() {
                    be.append(table.name(), &tx)?;
                }
                t.tx_ids.insert(tx.tx_id.clone());
                t.tx_count += 1;
                t.tx_partitions
                    .entry(self.bucket.key(tx.date))
                    .or_default()
                    .push(tx);
            }
        }
        Ok(id)
    }

    pub fn bank(&self, bank_id: u32) -> Option<&BloodBank> {
        self.tables.banks.get(&bank_id)
    }

    pub fn banks(&self) -> impl Iterator<Item = &BloodBank> {
        self.tables.banks.values()
    }

    pub fn user(&self, user_id: u32) -> Option<&User> {
        self.tables.users.get(&user_id)
    }

    pub fn users(&self) -> impl Iterator<Item = &User> {
        self.tables.users.values()
    }

    pub fn batch(&self, batch_id: &str) -> Option<&InventoryBatch> {
        self.tables.batches.get(batch_id)
    }

    /// All batches in insertion order.
    pub fn batches(&self) -> impl Iterator<Item = &InventoryBatch> {
        self.tables
            .batch_order
            .iter()
            .map(|id| &self.tables.batches[id])
    }

    /// Batches of one bank ordered by (expiration_date, batch_id), borrowed.
    pub fn bank_batches(&self, bank_id: u32) -> Result<impl Iterator<Item = &InventoryBatch>> {
        let part = self
            .tables
            .inventory_partitions
            .get(&bank_id)
            .ok_or_else(|| Error::NotFound {
                what: "bank",
                id: bank_id.to_string(),
            })?;
        Ok(part.iter().map(|(_, id)| &self.tables.batches[id]))
    }

    /// Full inventory partition of a bank, zero-quantity batches included,
    /// ordered by (expiration_date, batch_id).
    pub fn query_inventory_by_bank(&self, bank_id: u32) -> Result<Vec<InventoryBatch>> {
        Ok(self.bank_batches(bank_id)?.cloned().collect())
    }

    /// Units of (blood_type, component) across all banks that are not
    /// expired as of [`Store::current_date`].
    pub fn aggregate_quantity(&self, blood_type: BloodType, component: Component) -> u64 {
        let as_of = self.current_date;
        self.tables
            .batches
            .values()
            .filter(|b| b.blood_type == blood_type && b.component == component && b.usable_on(as_of))
            .map(|b| b.quantity as u64)
            .sum()
    }

    pub fn apply_inventory_delta(&mut self, batch_id: &str, delta: i64) -> Result<u32> {
        let batch = self
            .tables
            .batches
            .get(batch_id)
            .ok_or_else(|| Error::NotFound {
                what: "batch",
                id: batch_id.to_string(),
            })?;
        let new = batch.quantity as i64 + delta;
        if new < 0 || new > u32::MAX as i64 {
            return Err(Error::Underflow {
                batch_id: batch_id.to_string(),
                quantity: batch.quantity,
                delta,
            });
        }
        if let Some(be) = self.backend.as_mut() {
            be.append(
                "deltas",
                &DeltaEntry {
                    batch_id: batch_id.to_string(),
                    delta,
                },
            )?;
        }
        let batch = self.tables.batches.get_mut(batch_id).expect("checked above");
        batch.quantity = new as u32;
        Ok(batch.quantity)
    }

    pub fn transaction_count(&self) -> usize {
        self.tables.tx_count
    }

    pub fn transactions_in_partition(&self, date: NaiveDate) -> &[TransactionRecord] {
        self.tables
            .tx_partitions
            .get(&self.bucket.key(date))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All transactions, partition by partition.
    pub fn transactions(&self) -> impl Iterator<Item = &TransactionRecord> {
        self.tables.tx_partitions.values().flatten()
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(be) = self.backend.as_mut() {
            be.flush()?;
        }
        Ok(())
    }

    /// Flushes, folds the delta log into the inventory segment and releases
    /// the files.
    pub fn close(mut self) -> Result<()> {
        let Some(mut be) = self.backend.take() else {
            return Ok(());
        };
        be.flush()?;
        let dir = be.dir.clone();
        drop(be);
        let inv_path = dir.join(Table::BloodInventory.file_name());
        let tmp = dir.join("blood_inventory.jsonl.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for b in self.batches() {
                serde_json::to_writer(&mut out, b)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        fs::rename(&tmp, &inv_path)?;
        File::create(dir.join(DELTAS_FILE))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_dataset, Coord, GenConfig, Outcome, TxKind};

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, d).unwrap()
    }

    fn bank(id: u32) -> BloodBank {
        BloodBank {
            bank_id: id,
            name: format!("Bank {id}"),
            zip: "30060".into(),
            coord: Coord::new(10.0, 20.0),
            contact: "555-000-0000".into(),
        }
    }

    fn batch(id: &str, bank_id: u32, exp: NaiveDate, qty: u32) -> InventoryBatch {
        InventoryBatch {
            batch_id: id.into(),
            bank_id,
            blood_type: BloodType::OPos,
            component: Component::Wb,
            quantity: qty,
            expiration_date: exp,
        }
    }

    #[test]
    fn insert_and_get_bank() {
        let mut s = Store::in_memory();
        assert_eq!(s.insert_record(Record::Bank(bank(7))).unwrap(), "7");
        assert_eq!(s.bank(7), Some(&bank(7)));
        assert!(matches!(
            s.insert_record(Record::Bank(bank(7))),
            Err(Error::Conflict { .. })
        ));
    }

    #[test]
    fn schema_violations_rejected() {
        let mut s = Store::in_memory();
        let mut b = bank(1);
        b.zip = "12ab5".into();
        assert!(matches!(s.insert_record(Record::Bank(b)), Err(Error::Validation(_))));
        assert!(matches!(
            s.insert_record(Record::Batch(batch("x", 99, date(1), 1))),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn inventory_partition_order_and_empty_bank() {
        let mut s = Store::in_memory();
        s.insert_record(Record::Bank(bank(1))).unwrap();
        s.insert_record(Record::Bank(bank(2))).unwrap();
        s.insert_record(Record::Batch(batch("c", 1, date(9), 1))).unwrap();
        s.insert_record(Record::Batch(batch("b", 1, date(3), 0))).unwrap();
        s.insert_record(Record::Batch(batch("a", 1, date(9), 2))).unwrap();
        let ids: Vec<String> = s
            .query_inventory_by_bank(1)
            .unwrap()
            .into_iter()
            .map(|b| b.batch_id)
            .collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert!(s.query_inventory_by_bank(2).unwrap().is_empty());
        assert!(matches!(s.query_inventory_by_bank(3), Err(Error::NotFound { .. })));
    }

    #[test]
    fn deltas_and_underflow() {
        let mut s = Store::in_memory();
        s.insert_record(Record::Bank(bank(1))).unwrap();
        s.insert_record(Record::Batch(batch("a", 1, date(9), 5))).unwrap();
        s.insert_record(Record::Batch(batch("b", 1, date(9), 3))).unwrap();
        assert_eq!(s.apply_inventory_delta("a", -5).unwrap(), 0);
        assert!(matches!(s.apply_inventory_delta("b", -4), Err(Error::Underflow { .. })));
        assert_eq!(s.batch("b").unwrap().quantity, 3);
        assert!(s.apply_inventory_delta("zzz", 1).is_err());
    }

    #[test]
    fn aggregate_excludes_expired() {
        let mut s = Store::in_memory();
        s.insert_record(Record::Bank(bank(1))).unwrap();
        assert_eq!(s.aggregate_quantity(BloodType::OPos, Component::Wb), 0);
        s.insert_record(Record::Batch(batch("a", 1, date(10), 5))).unwrap();
        s.insert_record(Record::Batch(batch("b", 1, date(20), 3))).unwrap();
        s.set_current_date(date(10));
        assert_eq!(s.aggregate_quantity(BloodType::OPos, Component::Wb), 8);
        s.apply_inventory_delta("b", -2).unwrap();
        assert_eq!(s.aggregate_quantity(BloodType::OPos, Component::Wb), 6);
        s.set_current_date(date(11));
        assert_eq!(s.aggregate_quantity(BloodType::OPos, Component::Wb), 1);
        assert_eq!(s.aggregate_quantity(BloodType::ONeg, Component::Wb), 0);
    }

    #[test]
    fn transactions_counted_and_partitioned() {
        let ds = generate_dataset(&GenConfig::default()).unwrap();
        let s = Store::from_dataset(&ds, None).unwrap();
        assert_eq!(s.transaction_count(), 4200);
        assert_eq!(s.transactions().count(), 4200);
        let d = ds.transactions[100].date;
        let part = s.transactions_in_partition(d);
        assert_eq!(part.len(), ds.transactions.iter().filter(|t| t.date == d).count());

        let monthly = Store::in_memory().with_bucket(DateBucket::Month);
        assert_eq!(monthly.bucket.key(date(17)), "2024-01");
    }

    #[test]
    fn duplicate_transaction_conflicts() {
        let ds = generate_dataset(&GenConfig {
            n_users: 50,
            n_seed_transactions: 10,
            ..GenConfig::default()
        })
        .unwrap();
        let mut s = Store::from_dataset(&ds, None).unwrap();
        let tx = ds.transactions[0].clone();
        assert!(matches!(
            s.insert_record(Record::Transaction(tx.clone())),
            Err(Error::Conflict { .. })
        ));
        let mut bad = tx;
        bad.tx_id = "new".into();
        bad.kind = TxKind::Request;
        bad.outcome = Outcome::Denied;
        assert!(matches!(s.insert_record(Record::Transaction(bad)), Err(Error::Validation(_))));
    }

    #[test]
    fn file_backend_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store");
        let ds = generate_dataset(&GenConfig {
            n_users: 100,
            n_seed_transactions: 300,
            ..GenConfig::default()
        })
        .unwrap();
        let mut s = Store::from_dataset(&ds, Some(&path)).unwrap();
        let first = ds.inventory[0].batch_id.clone();
        s.apply_inventory_delta(&first, -1).unwrap();
        s.flush().unwrap();

        // Replay with pending deltas.
        let reopened = Store::open(&path).unwrap();
        assert_eq!(reopened.batch(&first).unwrap().quantity, ds.inventory[0].quantity - 1);
        drop(reopened);

        s.close().unwrap();
        assert_eq!(fs::read(path.join(DELTAS_FILE)).unwrap().len(), 0);
        let before: Vec<Vec<u8>> = Table::ALL
            .iter()
            .map(|t| fs::read(path.join(t.file_name())).unwrap())
            .collect();
        let s = Store::open(&path).unwrap();
        assert_eq!(s.batch(&first).unwrap().quantity, ds.inventory[0].quantity - 1);
        assert_eq!(s.transaction_count(), 300);
        s.close().unwrap();
        let after: Vec<Vec<u8>> = Table::ALL
            .iter()
            .map(|t| fs::read(path.join(t.file_name())).unwrap())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn from_dataset_refuses_existing_store() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&GenConfig {
            n_users: 20,
            n_seed_transactions: 5,
            ..GenConfig::default()
        })
        .unwrap();
        Store::from_dataset(&ds, Some(dir.path())).unwrap().close().unwrap();
        assert!(Store::from_dataset(&ds, Some(dir.path())).is_err());
    }
}
