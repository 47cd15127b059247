use std::sync::{Arc, LazyLock};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use trustos_core::clock::ManualClock;
use trustos_core::engine::Engine;
use trustos_core::model::Role;
use trustos_core::probe::executor::Trigger;
use trustos_core::sim::builder;
use trustos_core::store::Store;
use trustos_core::vault::MasterKey;
use trustos_gateway::export::{export_auditor_bundle, verify_bundle, Verdict};

const WS: &str = "ws_acme_fin_8821";
const STATUSES: [&str; 4] = ["PASS", "FAIL", "WARN", "PARTIAL_PASS"];

static BUNDLE: LazyLock<String> = LazyLock::new(|| {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 4, 6, 0, 14, 32).unwrap()));
    let e = Engine::new(Arc::new(Store::in_memory()), Some(MasterKey::generate()), clock);
    let ws = e.provision(&builder::acme_financial()).unwrap();
    e.scan_now(&ws, Trigger::Manual).unwrap();
    export_auditor_bundle(e.store(), e.catalog(), &ws, Role::Auditor).unwrap()
});

fn rows() -> Vec<Vec<String>> {
    BUNDLE
        .lines()
        .skip(1)
        .map(|l| l.split(", ").map(String::from).collect())
        .collect()
}

fn render(rows: &[Vec<String>], sep: &str) -> String {
    let mut s = ["ASSERTION_ID", "CONTROL", "INTEGRATION", "STATUS", "WATERMARK"].join(sep) + "\n";
    for r in rows {
        s.push_str(&r.join(sep));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
enum Mutation {
    /// Replace the status with another status word or free text.
    Status(String),
    /// Overwrite one character of the id.
    IdChar(usize, char),
    /// Replace the id wholesale.
    Id(String),
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        prop_oneof![
            proptest::sample::select(STATUSES.to_vec()).prop_map(String::from),
            "[A-Z_]{1,14}",
        ]
        .prop_map(Mutation::Status),
        (0usize..10, proptest::char::range('0', 'z')).prop_map(|(i, c)| Mutation::IdChar(i, c)),
        "ea_[0-9a-f]{7}".prop_map(Mutation::Id),
    ]
}

fn apply(cell: &mut String, m: &Mutation) {
    match m {
        Mutation::Status(s) | Mutation::Id(s) => *cell = s.clone(),
        Mutation::IdChar(i, c) => {
            let mut chars: Vec<char> = cell.chars().collect();
            let i = i % chars.len();
            chars[i] = *c;
            *cell = chars.into_iter().collect();
        }
    }
}

#[test]
fn untouched_bundle_is_clean() {
    let report = verify_bundle(&BUNDLE, WS).unwrap();
    assert_eq!(report.rows.len(), 8);
    assert!(report.is_clean());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    /// Any single-cell change to an id or status is caught, on exactly that
    /// row, whatever the separator style or row order.
    #[test]
    fn single_cell_mutations_are_detected(
        row in 0usize..8,
        m in mutation(),
        compact in any::<bool>(),
        order in Just((0usize..8).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let mut rows = rows();
        let col = match m { Mutation::Status(_) => 3, _ => 0 };
        let original = rows[row][col].clone();
        apply(&mut rows[row][col], &m);
        prop_assume!(rows[row][col] != original);
        prop_assume!(!rows[row][col].trim().is_empty() && !rows[row][col].contains([',', '"']));
        let target = rows[row][0].clone();
        let shuffled: Vec<Vec<String>> = order.iter().map(|i| rows[*i].clone()).collect();
        let text = render(&shuffled, if compact { "," } else { ", " });

        let report = verify_bundle(&text, WS).unwrap();
        let tampered: Vec<_> = report.rows.iter().filter(|r| r.verdict == Verdict::Tampered).collect();
        prop_assert_eq!(tampered.len(), 1);
        prop_assert_eq!(&tampered[0].assertion_id, &target);
    }
}
