//! Seeded synthetic workloads: the campus elevator trace and the restaurant
//! Triple-H-R stream.
//!
//! Elevator logic: every person is first placed at a uniformly chosen
//! location, then each record moves a uniformly chosen person to a uniformly
//! chosen *other* location with a random decision.
//!
//! Restaurant logic: every person first emits all seven attributes, then each
//! record changes one attribute of a random person. Activities are drawn
//! from five lists weighted by occupation and by whether the person is in a
//! store or a restaurant.

use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, Binning, ElevatorRecord, TripleHr};

fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2023, 1, 2)
        .and_then(|d| d.and_hms_opt(7, 0, 0))
        .expect("valid constant date")
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Index drawn proportionally to `weights` (all zero → index 0).
fn weighted(rng: &mut ChaCha8Rng, weights: &[u32]) -> usize {
    let total: u32 = weights.iter().sum();
    if total == 0 {
        return 0;
    }
    let mut r = rng.random_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

// ---------------------------------------------------------------------------
// Elevator

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationSpec {
    /// Short code used in the location URI.
    pub code: String,
    /// Display name (an identity, kept in the coordinator store).
    pub name: String,
    pub kind: String,
}

impl LocationSpec {
    pub fn new(code: &str, name: &str, kind: &str) -> Self {
        Self {
            code: code.into(),
            name: name.into(),
            kind: kind.into(),
        }
    }

    pub fn uri(&self) -> String {
        format!("urn:campus:location:{}", self.code)
    }
}

pub fn default_locations() -> Vec<LocationSpec> {
    vec![
        LocationSpec::new("HOME", "Home", "Residence"),
        LocationSpec::new("GYM", "GYM", "Recreation"),
        LocationSpec::new("DINNINGHALL", "DINNINGHALL", "Dining"),
        LocationSpec::new("COFFEESHOP", "COFFEESHOP", "Cafe"),
        LocationSpec::new("SEC", "Science and Engineering Complex", "Academic"),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElevatorConfig {
    pub person_count: usize,
    pub locations: Vec<LocationSpec>,
    pub record_count: usize,
    pub seed: u64,
    pub start: NaiveDateTime,
    /// Upper bound of the random gap between consecutive records.
    pub max_gap_secs: i64,
}

impl Default for ElevatorConfig {
    fn default() -> Self {
        Self {
            person_count: 50,
            locations: default_locations(),
            record_count: 100_000,
            seed: 7,
            start: default_start(),
            max_gap_secs: 60,
        }
    }
}

const PERSON_TYPES: [&str; 3] = ["Student", "Professor", "Staff"];
const DECISIONS: [&str; 2] = ["TakeElevator", "TakeStairs"];
const FIRST_NAMES: [&str; 10] = [
    "Donnie",
    "Maria",
    "Kenji",
    "Amara",
    "Louis",
    "Priya",
    "Tomasz",
    "Ines",
    "Oluwaseun",
    "Freya",
];
const LAST_NAMES: [&str; 10] = [
    "Ortiz",
    "Halvorsen",
    "Nakamura",
    "Okafor",
    "Duval",
    "Raman",
    "Kowalski",
    "Ferreira",
    "Adeyemi",
    "Lindqvist",
];

fn person_name(i: usize) -> String {
    let n = FIRST_NAMES.len();
    let base = format!(
        "{} {}",
        FIRST_NAMES[i % n],
        LAST_NAMES[(i / n) % LAST_NAMES.len()]
    );
    match i / (n * LAST_NAMES.len()) {
        0 => base,
        k => format!("{base} {}", k + 1),
    }
}

#[derive(Debug, Clone)]
struct Person {
    id: String,
    name: String,
    kind: &'static str,
}

/// Iterator over elevator records.
#[derive(Debug, Clone)]
pub struct ElevatorGenerator {
    cfg: ElevatorConfig,
    rng: ChaCha8Rng,
    people: Vec<Person>,
    at: Vec<usize>,
    now: NaiveDateTime,
    emitted: usize,
}

pub fn generate_elevator(config: &ElevatorConfig) -> Result<ElevatorGenerator> {
    if config.locations.is_empty() {
        return Err(Error::Config(
            "elevator workload needs at least one location".into(),
        ));
    }
    if config.person_count == 0 {
        return Err(Error::Config(
            "elevator workload needs at least one person".into(),
        ));
    }
    if config.max_gap_secs < 1 {
        return Err(Error::Config("max_gap_secs must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let people = (0..config.person_count)
        .map(|i| Person {
            id: format!("P{i:04}"),
            name: person_name(i),
            kind: pick(&mut rng, &PERSON_TYPES),
        })
        .collect();
    Ok(ElevatorGenerator {
        cfg: config.clone(),
        rng,
        people,
        at: vec![0; config.person_count],
        now: config.start,
        emitted: 0,
    })
}

impl Iterator for ElevatorGenerator {
    type Item = ElevatorRecord;

    fn next(&mut self) -> Option<ElevatorRecord> {
        if self.emitted >= self.cfg.record_count {
            return None;
        }
        let n_loc = self.cfg.locations.len();
        let person = if self.emitted < self.people.len() {
            // birth
            let p = self.emitted;
            self.at[p] = self.rng.random_range(0..n_loc);
            p
        } else {
            let p = self.rng.random_range(0..self.people.len());
            if n_loc > 1 {
                let step = self.rng.random_range(1..n_loc);
                self.at[p] = (self.at[p] + step) % n_loc;
            }
            p
        };
        self.now += Duration::seconds(self.rng.random_range(1..=self.cfg.max_gap_secs));
        let who = &self.people[person];
        let loc = &self.cfg.locations[self.at[person]];
        let rec = ElevatorRecord {
            index: self.emitted as u64,
            person_id: who.id.clone(),
            person_name: who.name.clone(),
            person_type: who.kind.to_owned(),
            date: format_timestamp(&self.now),
            decision: (*pick(&mut self.rng, &DECISIONS)).to_owned(),
            action: "MoveTo".into(),
            action_uri: "urn:campus:action:move-to".into(),
            action_type: "location".into(),
            location_uri: loc.uri(),
            location_name: loc.name.clone(),
            location_type: loc.kind.clone(),
        };
        self.emitted += 1;
        Some(rec)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.cfg.record_count - self.emitted;
        (left, Some(left))
    }
}

impl ExactSizeIterator for ElevatorGenerator {}

/// Writes the elevator file (comma-delimited, one record per line).
pub fn write_elevator(config: &ElevatorConfig, out: &mut impl Write) -> Result<()> {
    for rec in generate_elevator(config)? {
        writeln!(out, "{}", rec.to_line(',')).map_err(Error::from)?;
    }
    Ok(())
}

pub fn elevator_text(config: &ElevatorConfig) -> Result<String> {
    let mut buf = Vec::new();
    write_elevator(config, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

// ---------------------------------------------------------------------------
// Restaurant

pub const RESTAURANT_ATTRIBUTES: [&str; 7] = [
    "location",
    "activity",
    "health",
    "blood_sugar",
    "emotion",
    "age",
    "sex",
];

/// The five activity lists, in order: work, study, dining, leisure, errands.
pub const ACTIVITY_LISTS: [(&str, [&str; 5]); 5] = [
    (
        "work",
        ["Meeting", "Coding", "Planning", "Presenting", "Researching"],
    ),
    (
        "study",
        [
            "Studying",
            "Reading",
            "Attending Lecture",
            "Writing Notes",
            "Reviewing",
        ],
    ),
    (
        "dining",
        [
            "Eating",
            "Ordering",
            "Waiting For Table",
            "Paying",
            "Chatting",
        ],
    ),
    (
        "leisure",
        ["Browsing", "Resting", "Socializing", "Gaming", "Strolling"],
    ),
    (
        "errands",
        [
            "Shopping",
            "Returning Item",
            "Picking Up",
            "Comparing Prices",
            "Queuing",
        ],
    ),
];

const STORE_KINDS: [&str; 23] = [
    "Bookstore",
    "Pharmacy",
    "Grocer",
    "Hardware",
    "Florist",
    "Stationery",
    "Electronics",
    "Bakery",
    "Tailor",
    "Optician",
    "Toyshop",
    "Jeweler",
    "Shoeshop",
    "Boutique",
    "Newsstand",
    "Giftshop",
    "Sportshop",
    "Musicshop",
    "Petshop",
    "Cobbler",
    "Barber",
    "Laundromat",
    "Printshop",
];
const RESTAURANT_KINDS: [&str; 10] = [
    "Trattoria",
    "Noodlebar",
    "Bistro",
    "Grill",
    "Taqueria",
    "Sushibar",
    "Diner",
    "Creperie",
    "Steakhouse",
    "Canteen",
];
const HEALTH: [&str; 4] = ["Healthy", "Tired", "Sick", "Recovering"];
const BLOOD_SUGAR: [&str; 3] = ["Low", "Normal", "High"];
const EMOTION: [&str; 5] = ["Happy", "Calm", "Stressed", "Sad", "Excited"];
const SEX: [&str; 2] = ["Female", "Male"];

/// Per-attribute change weights for non-birth records (sex never changes).
const CHANGE_WEIGHTS: [u32; 7] = [34, 34, 6, 10, 12, 4, 0];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestaurantConfig {
    pub student_count: usize,
    pub professor_count: usize,
    pub store_count: usize,
    pub restaurant_count: usize,
    pub record_count: usize,
    pub seed: u64,
    pub start: NaiveDateTime,
    pub max_gap_secs: i64,
}

impl Default for RestaurantConfig {
    fn default() -> Self {
        Self {
            student_count: 2000,
            professor_count: 500,
            store_count: 23,
            restaurant_count: 10,
            record_count: 100_000,
            seed: 11,
            start: default_start(),
            max_gap_secs: 20,
        }
    }
}

impl RestaurantConfig {
    /// The 2000 students / 100 professors variant of the compression run.
    pub fn compression_preset() -> Self {
        Self {
            professor_count: 100,
            ..Self::default()
        }
    }

    /// 200 students / 50 professors, for quick local runs.
    pub fn desk_preset() -> Self {
        Self {
            student_count: 200,
            professor_count: 50,
            ..Self::default()
        }
    }

    pub fn person_count(&self) -> usize {
        self.student_count + self.professor_count
    }

    /// Location state values: stores first, then restaurants.
    pub fn places(&self) -> Vec<String> {
        let named = |kinds: &[&str], n: usize| -> Vec<String> {
            (0..n)
                .map(|i| match i / kinds.len() {
                    0 => kinds[i].to_owned(),
                    k => format!("{} {}", kinds[i % kinds.len()], k + 1),
                })
                .collect()
        };
        let mut out = named(&STORE_KINDS, self.store_count)
            .into_iter()
            .map(|s| format!("Store {s}"))
            .collect::<Vec<_>>();
        out.extend(
            named(&RESTAURANT_KINDS, self.restaurant_count)
                .into_iter()
                .map(|s| format!("Restaurant {s}")),
        );
        out
    }
}

#[derive(Debug, Clone)]
struct Diner {
    name: String,
    professor: bool,
    age: u32,
    /// Current value index per attribute, age excluded.
    state: [usize; 7],
}

/// Iterator over restaurant records.
#[derive(Debug, Clone)]
pub struct RestaurantGenerator {
    cfg: RestaurantConfig,
    rng: ChaCha8Rng,
    places: Vec<String>,
    people: Vec<Diner>,
    ages: Binning,
    now: NaiveDateTime,
    emitted: usize,
}

pub fn generate_restaurant(config: &RestaurantConfig) -> Result<RestaurantGenerator> {
    if config.person_count() == 0 {
        return Err(Error::Config(
            "restaurant workload needs at least one person".into(),
        ));
    }
    if config.store_count + config.restaurant_count == 0 {
        return Err(Error::Config(
            "restaurant workload needs at least one location".into(),
        ));
    }
    if config.max_gap_secs < 1 {
        return Err(Error::Config("max_gap_secs must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let places = config.places();
    let people = (0..config.person_count())
        .map(|i| {
            let professor = i >= config.student_count;
            let name = if professor {
                format!("Professor_{:05}", i - config.student_count)
            } else {
                format!("Student_{i:05}")
            };
            let age = if professor {
                rng.random_range(28..70)
            } else {
                rng.random_range(17..30)
            };
            Diner {
                name,
                professor,
                age,
                state: [0; 7],
            }
        })
        .collect();
    Ok(RestaurantGenerator {
        cfg: config.clone(),
        rng,
        places,
        people,
        ages: Binning::new(0.0, 10.0)?,
        now: config.start,
        emitted: 0,
    })
}

fn activity(list: usize, item: usize) -> &'static str {
    ACTIVITY_LISTS[list].1[item]
}

impl RestaurantGenerator {
    fn in_restaurant(&self, p: usize) -> bool {
        self.people[p].state[0] >= self.cfg.store_count
    }

    /// Encoded as `list * 5 + item`.
    fn draw_activity(&mut self, p: usize) -> usize {
        // weights over work, study, dining, leisure, errands
        let w: [u32; 5] = match (self.people[p].professor, self.in_restaurant(p)) {
            (true, true) => [3, 0, 5, 1, 1],
            (true, false) => [3, 0, 1, 2, 4],
            (false, true) => [0, 3, 5, 2, 0],
            (false, false) => [0, 3, 1, 3, 3],
        };
        let list = weighted(&mut self.rng, &w);
        list * 5 + self.rng.random_range(0..5)
    }

    fn value(&self, p: usize, attr: usize) -> String {
        let d = &self.people[p];
        let s = d.state[attr];
        match attr {
            0 => self.places[s].clone(),
            1 => activity(s / 5, s % 5).to_owned(),
            2 => HEALTH[s].to_owned(),
            3 => BLOOD_SUGAR[s].to_owned(),
            4 => EMOTION[s].to_owned(),
            5 => self.ages.label(f64::from(d.age)),
            _ => SEX[s].to_owned(),
        }
    }

    /// Draws a value different from the current one where possible.
    fn change(&mut self, p: usize, attr: usize) {
        let cur = self.people[p].state[attr];
        let n = match attr {
            0 => self.places.len(),
            2 => HEALTH.len(),
            3 => BLOOD_SUGAR.len(),
            4 => EMOTION.len(),
            _ => 0,
        };
        let next = match attr {
            1 => {
                let mut a = self.draw_activity(p);
                for _ in 0..4 {
                    if a != cur {
                        break;
                    }
                    a = self.draw_activity(p);
                }
                a
            }
            5 => {
                self.people[p].age += 1;
                0
            }
            6 => cur,
            _ if n > 1 => (cur + self.rng.random_range(1..n)) % n,
            _ => cur,
        };
        self.people[p].state[attr] = next;
    }

    fn birth(&mut self, p: usize, attr: usize) {
        let v = match attr {
            0 => self.rng.random_range(0..self.places.len()),
            1 => self.draw_activity(p),
            2 => weighted(&mut self.rng, &[8, 3, 1, 1]),
            3 => weighted(&mut self.rng, &[1, 6, 1]),
            4 => self.rng.random_range(0..EMOTION.len()),
            5 => 0,
            _ => self.rng.random_range(0..SEX.len()),
        };
        self.people[p].state[attr] = v;
    }

    fn record(&self, p: usize, attr: usize) -> TripleHr {
        let d = &self.people[p];
        let mut conditions = Vec::with_capacity(2);
        if matches!(attr, 1 | 3) {
            conditions.push("Location".to_owned());
        }
        conditions.push(format!("Timestamp={}", format_timestamp(&self.now)));
        let source = match attr {
            0 => "GPS",
            1 => "Calendar",
            2 => "Health Records",
            3 => "Body Sensors",
            4 => "Facial Recognition",
            _ => "Registry",
        };
        TripleHr {
            category_path: if d.professor {
                "Person::Professor"
            } else {
                "Person::Student"
            }
            .to_owned(),
            object_name: d.name.clone(),
            attribute: RESTAURANT_ATTRIBUTES[attr].to_owned(),
            state_value: self.value(p, attr),
            conditions,
            complement: None,
            sources: vec![source.to_owned()],
            timestamp: self.now,
        }
    }
}

impl Iterator for RestaurantGenerator {
    type Item = TripleHr;

    fn next(&mut self) -> Option<TripleHr> {
        if self.emitted >= self.cfg.record_count {
            return None;
        }
        let births = self.people.len() * RESTAURANT_ATTRIBUTES.len();
        let (p, attr) = if self.emitted < births {
            let (p, a) = (self.emitted / 7, self.emitted % 7);
            self.birth(p, a);
            (p, a)
        } else {
            let p = self.rng.random_range(0..self.people.len());
            let a = weighted(&mut self.rng, &CHANGE_WEIGHTS);
            self.change(p, a);
            (p, a)
        };
        self.now += Duration::seconds(self.rng.random_range(1..=self.cfg.max_gap_secs));
        self.emitted += 1;
        Some(self.record(p, attr))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.cfg.record_count - self.emitted;
        (left, Some(left))
    }
}

impl ExactSizeIterator for RestaurantGenerator {}

/// Writes the restaurant file (pipe-delimited Triple-H-R).
pub fn write_restaurant(config: &RestaurantConfig, out: &mut impl Write) -> Result<()> {
    for rec in generate_restaurant(config)? {
        writeln!(out, "{}", rec.to_line('|')).map_err(Error::from)?;
    }
    Ok(())
}

pub fn restaurant_text(config: &RestaurantConfig) -> Result<String> {
    let mut buf = Vec::new();
    write_restaurant(config, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Either workload, for callers that pick at run time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "workload", rename_all = "lowercase")]
pub enum Workload {
    Elevator(ElevatorConfig),
    Restaurant(RestaurantConfig),
}

impl Workload {
    pub fn write(&self, out: &mut impl Write) -> Result<()> {
        match self {
            Workload::Elevator(c) => write_elevator(c, out),
            Workload::Restaurant(c) => write_restaurant(c, out),
        }
    }

    pub fn text(&self) -> Result<String> {
        match self {
            Workload::Elevator(c) => elevator_text(c),
            Workload::Restaurant(c) => restaurant_text(c),
        }
    }
}
