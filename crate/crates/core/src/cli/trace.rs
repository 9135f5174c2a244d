//! Electricity price traces in long CSV format (`slot,zone,price`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, LogNormal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::problems::SlotRng;

/// Per-zone price series over a common, contiguous range of slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTrace {
    zones: Vec<String>,
    /// `prices[z][t]`.
    prices: Vec<Vec<f64>>,
    first_slot: usize,
}

impl PriceTrace {
    pub fn new(zones: Vec<String>, prices: Vec<Vec<f64>>, first_slot: usize) -> Result<Self> {
        if zones.len() != prices.len() {
            return Err(Error::Trace(format!(
                "{} zone names for {} price series",
                zones.len(),
                prices.len()
            )));
        }
        if let Some(first) = prices.first() {
            if let Some((z, s)) = zones.iter().zip(&prices).find(|(_, s)| s.len() != first.len()) {
                return Err(Error::Trace(format!(
                    "ragged trace: zone {z} has {} slots, zone {} has {}",
                    s.len(),
                    zones[0],
                    first.len()
                )));
            }
        }
        for (z, s) in zones.iter().zip(&prices) {
            if let Some(t) = s.iter().position(|p| !p.is_finite()) {
                return Err(Error::Trace(format!("zone {z}: non-finite price at slot {}", first_slot + t)));
            }
        }
        Ok(Self { zones, prices, first_slot })
    }

    pub fn zones(&self) -> &[String] {
        &self.zones
    }

    pub fn num_zones(&self) -> usize {
        self.zones.len()
    }

    /// Number of slots.
    pub fn len(&self) -> usize {
        self.prices.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn first_slot(&self) -> usize {
        self.first_slot
    }

    /// Price of zone `zone` at the `t`-th slot of the trace.
    pub fn price(&self, zone: usize, t: usize) -> f64 {
        self.prices[zone][t]
    }

    pub fn series(&self, zone: usize) -> &[f64] {
        &self.prices[zone]
    }
}

#[derive(Deserialize)]
struct Row {
    slot: usize,
    zone: String,
    price: String,
}

/// Reads a trace file.
pub fn ingest_price_trace(path: impl AsRef<Path>) -> Result<PriceTrace> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_price_trace(file)
}

/// Parses long-format rows into per-zone series. Zones keep their order of first
/// appearance.
pub fn parse_price_trace<R: Read>(reader: R) -> Result<PriceTrace> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["slot", "zone", "price"] {
        return Err(Error::Trace(format!(
            "expected header \"slot,zone,price\", found \"{}\"",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut series: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for (line, row) in csv.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Trace(format!("row {}: {e}", line + 2)))?;
        let price: f64 = row.price.parse().map_err(|_| {
            Error::Trace(format!("row {}: price \"{}\" is not a number", line + 2, row.price))
        })?;
        if !series.contains_key(&row.zone) {
            order.push(row.zone.clone());
        }
        if series.entry(row.zone.clone()).or_default().insert(row.slot, price).is_some() {
            return Err(Error::Trace(format!(
                "row {}: duplicate slot {} for zone {}",
                line + 2,
                row.slot,
                row.zone
            )));
        }
    }
    let mut prices = Vec::with_capacity(order.len());
    let mut first_slot = 0;
    for (i, zone) in order.iter().enumerate() {
        let s = &series[zone];
        let lo = *s.keys().next().expect("zones appear with at least one row");
        let hi = *s.keys().next_back().expect("nonempty");
        if hi - lo + 1 != s.len() {
            let missing = (lo..=hi).find(|t| !s.contains_key(t)).unwrap_or(lo);
            return Err(Error::Trace(format!("zone {zone}: missing slot {missing}")));
        }
        if i == 0 {
            first_slot = lo;
        } else if lo != first_slot || s.len() != prices.first().map_or(0, |p: &Vec<f64>| p.len()) {
            return Err(Error::Trace(format!(
                "ragged trace: zone {zone} covers slots {lo}..={hi}, zone {} covers {}..={}",
                order[0],
                first_slot,
                first_slot + prices[0].len() - 1
            )));
        }
        prices.push(s.values().copied().collect());
    }
    PriceTrace::new(order, prices, first_slot)
}

/// Writes the trace in long format, slot-major.
pub fn write_price_trace<W: Write>(trace: &PriceTrace, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["slot", "zone", "price"])?;
    for t in 0..trace.len() {
        for (z, name) in trace.zones.iter().enumerate() {
            csv.write_record([
                (trace.first_slot + t).to_string(),
                name.clone(),
                trace.prices[z][t].to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn export_price_trace(trace: &PriceTrace, path: impl AsRef<Path>) -> Result<()> {
    write_price_trace(trace, std::fs::File::create(path.as_ref())?)
}

/// Mean price of the generated traces.
pub const SYNTHETIC_MEAN_PRICE: f64 = 30.0;
/// Log-scale standard deviation of the generated traces.
pub const SYNTHETIC_SIGMA: f64 = 0.4;

/// Level multipliers of the generated zones, spread linearly over `[0.85, 1.2]`.
pub fn zone_offsets(zones: usize) -> Vec<f64> {
    match zones {
        0 => Vec::new(),
        1 => vec![1.0],
        n => (0..n).map(|z| 0.85 + 0.35 * z as f64 / (n - 1) as f64).collect(),
    }
}

/// Seeded i.i.d. lognormal prices with per-zone mean `30·offset` and log-scale σ = 0.4.
/// Zones are named `Z0`, `Z1`, ...
pub fn generate_price_trace(slots: usize, zones: usize, seed: u64) -> PriceTrace {
    let mut rng = SlotRng::seed_from_u64(seed);
    let offsets = zone_offsets(zones);
    let dists: Vec<LogNormal<f64>> = offsets
        .iter()
        .map(|o| {
            let mu = (SYNTHETIC_MEAN_PRICE * o).ln() - 0.5 * SYNTHETIC_SIGMA * SYNTHETIC_SIGMA;
            LogNormal::new(mu, SYNTHETIC_SIGMA).expect("sigma is positive")
        })
        .collect();
    let mut prices = vec![Vec::with_capacity(slots); zones];
    for _ in 0..slots {
        for (z, dist) in dists.iter().enumerate() {
            prices[z].push(dist.sample(&mut rng));
        }
    }
    let names = (0..zones).map(|z| format!("Z{z}")).collect();
    PriceTrace::new(names, prices, 0).expect("generated prices are finite and aligned")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PriceTrace> {
        parse_price_trace(text.as_bytes())
    }

    #[test]
    fn constant_two_slot_trace() {
        let mut text = String::from("slot,zone,price\n");
        for t in 0..2 {
            for z in ["A", "B", "C", "D", "E"] {
                text.push_str(&format!("{t},{z},10\n"));
            }
        }
        let trace = parse(&text).unwrap();
        assert_eq!(trace.num_zones(), 5);
        assert_eq!(trace.len(), 2);
        for z in 0..5 {
            assert_eq!(trace.series(z), &[10.0, 10.0]);
        }
    }

    #[test]
    fn missing_slot_of_one_zone_is_ragged() {
        let text = "slot,zone,price\n0,A,1\n0,B,1\n1,A,2\n";
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("ragged"), "{err}");
    }

    #[test]
    fn gaps_and_bad_rows_are_rejected() {
        assert!(parse("slot,zone,price\n0,A,1\n2,A,1\n").unwrap_err().to_string().contains("missing slot 1"));
        assert!(parse("slot,zone,price\n0,A,abc\n").unwrap_err().to_string().contains("not a number"));
        assert!(parse("slot,zone,price\n0,A,1\n0,A,2\n").is_err());
        assert!(parse("time,zone,price\n0,A,1\n").is_err());
    }

    #[test]
    fn negative_prices_are_allowed() {
        let trace = parse("slot,zone,price\n0,A,-3.5\n").unwrap();
        assert_eq!(trace.price(0, 0), -3.5);
    }

    #[test]
    fn generated_trace_round_trips() {
        let trace = generate_price_trace(50, 5, 4);
        let mut buf = Vec::new();
        write_price_trace(&trace, &mut buf).unwrap();
        assert_eq!(parse_price_trace(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn generated_levels_follow_offsets() {
        let trace = generate_price_trace(20_000, 5, 1);
        for (z, o) in zone_offsets(5).iter().enumerate() {
            let m = trace.series(z).iter().sum::<f64>() / trace.len() as f64;
            assert!((m / (30.0 * o) - 1.0).abs() < 0.02, "zone {z}: {m}");
        }
    }
}
