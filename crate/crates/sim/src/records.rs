//! Per-step run records and their CSV form.
//!
//! The file starts with a `# schema_version=1` comment, then the header
//! `schema_version,replication,step,inst_regret,cum_regret,switch_count,rho_spent,good_event`.
//! `good_event` is a bit set: bit 0 means every noise draw stayed within
//! the bound the agent was sized for, bit 1 means every Gram factorization
//! succeeded. `3` is the all-clear value.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const NOISE_OK: u8 = 1;
pub const FACTORIZATION_OK: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub replication: usize,
    /// 1-based episode (RL) or round (bandit).
    pub step: usize,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub switch_count: usize,
    pub rho_spent: f64,
    pub good_event: u8,
}

impl RunRecord {
    pub fn good_event_flags(noise_ok: bool, factorization_ok: bool) -> u8 {
        (if noise_ok { NOISE_OK } else { 0 }) | (if factorization_ok { FACTORIZATION_OK } else { 0 })
    }
}

pub fn write_csv<W: Write>(records: &[RunRecord], mut out: W) -> csv::Result<()> {
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record([
        "schema_version",
        "replication",
        "step",
        "inst_regret",
        "cum_regret",
        "switch_count",
        "rho_spent",
        "good_event",
    ])?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> csv::Result<Vec<RunRecord>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input)
        .deserialize()
        .collect()
}

pub fn write_csv_file(records: &[RunRecord], path: &std::path::Path) -> csv::Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(records, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RunRecord> {
        (1..=4)
            .map(|step| RunRecord {
                schema_version: SCHEMA_VERSION,
                replication: step % 2,
                step,
                inst_regret: 0.1 * step as f64 / 3.0,
                cum_regret: 1.0 / 7.0 * step as f64,
                switch_count: step / 2,
                rho_spent: 0.3,
                good_event: RunRecord::good_event_flags(step != 3, true),
            })
            .collect()
    }

    #[test]
    fn empty_records_give_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# schema_version=1\nschema_version,replication,step,inst_regret,cum_regret,switch_count,rho_spent,good_event\n"
        );
        assert!(read_csv(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let records = sample();
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn flags() {
        assert_eq!(RunRecord::good_event_flags(true, true), 3);
        assert_eq!(RunRecord::good_event_flags(false, true), 2);
        assert_eq!(RunRecord::good_event_flags(true, false), 1);
    }
}
