//! Per-run record of provider calls: operation, token estimates and wall
//! time.

use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub operation: String,
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub ok: bool,
    /// `None` when timing is disabled for reproducible reports.
    pub wall_ms: Option<f64>,
}

/// Rough token count: four characters of serialized JSON per token.
pub fn estimate_tokens<T: Serialize + ?Sized>(value: &T) -> usize {
    serde_json::to_string(value).map_or(0, |s| s.chars().count().div_ceil(4))
}

#[derive(Debug, Default)]
pub struct CallLedger {
    records: Mutex<Vec<CallRecord>>,
    record_timings: bool,
}

impl CallLedger {
    pub fn new(record_timings: bool) -> Self {
        Self { records: Mutex::new(Vec::new()), record_timings }
    }

    pub fn records_timings(&self) -> bool {
        self.record_timings
    }

    /// Runs `f` and appends its record.
    pub fn call<I, T, E, F>(&self, operation: &str, input: &I, f: F) -> Result<T, E>
    where
        I: Serialize + ?Sized,
        T: Serialize,
        F: FnOnce() -> Result<T, E>,
    {
        let (result, record) = self.call_detached(operation, input, f);
        self.push(record);
        result
    }

    /// Runs `f` and returns its record without appending it, so concurrent
    /// callers can append records in a deterministic order afterwards.
    pub fn call_detached<I, T, E, F>(&self, operation: &str, input: &I, f: F) -> (Result<T, E>, CallRecord)
    where
        I: Serialize + ?Sized,
        T: Serialize,
        F: FnOnce() -> Result<T, E>,
    {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        let record = CallRecord {
            operation: operation.to_owned(),
            input_tokens: estimate_tokens(input),
            output_tokens: result.as_ref().map_or(0, estimate_tokens),
            ok: result.is_ok(),
            wall_ms: self.record_timings.then_some(elapsed),
        };
        (result, record)
    }

    pub fn push(&self, record: CallRecord) {
        self.records.lock().unwrap_or_else(|p| p.into_inner()).push(record);
    }

    pub fn extend(&self, records: impl IntoIterator<Item = CallRecord>) {
        self.records.lock().unwrap_or_else(|p| p.into_inner()).extend(records);
    }

    pub fn snapshot(&self) -> Vec<CallRecord> {
        self.records.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn into_records(self) -> Vec<CallRecord> {
        self.records.into_inner().unwrap_or_else(|p| p.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_tokens_and_failure() {
        let ledger = CallLedger::new(false);
        let ok: Result<String, ()> = ledger.call("extract", "abcdefgh", || Ok("xy".to_string()));
        assert!(ok.is_ok());
        let err: Result<String, &str> = ledger.call("summarize", &[1, 2], || Err("down"));
        assert!(err.is_err());
        let records = ledger.into_records();
        assert_eq!(records[0].input_tokens, 3); // "\"abcdefgh\"" is 10 chars
        assert_eq!(records[0].output_tokens, 1);
        assert!(records[0].ok && !records[1].ok);
        assert!(records.iter().all(|r| r.wall_ms.is_none()));
    }

    #[test]
    fn timings_when_enabled() {
        let ledger = CallLedger::new(true);
        let _: Result<u8, ()> = ledger.call("embed", &(), || Ok(1));
        assert!(ledger.snapshot()[0].wall_ms.is_some());
    }
}
