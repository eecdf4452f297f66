//! Canned verification scenarios with exact expected timings, shared by
//! the `verify` subcommand and the acceptance suite.

use crate::adversary::{InjectionTrace, TxnSpec};
use crate::bds::BdsScheduler;
use crate::cluster::ClusterHierarchy;
use crate::engine::{run_simulation, RunOutput, SimParams};
use crate::fds::{epoch_base, FdsScheduler};
use crate::model::{AccountBook, ShardId, TxnId};
use crate::topology::Topology;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: &'static str,
    pub checks: Vec<Check>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    fn check_eq<T: PartialEq + std::fmt::Debug>(&mut self, name: &str, got: T, want: T) {
        let pass = got == want;
        self.check(name, pass, format!("expected {want:?}, got {got:?}"));
    }
}

fn spec(id: u64, home: u32, accounts: &[u64]) -> TxnSpec {
    TxnSpec {
        id,
        home,
        accounts: accounts.to_vec(),
    }
}

/// Four transactions over four uniform shards (accounts a..d on S1..S4):
/// T1 = {a,b} from S1, T2 = {a,d} from S3, T3 = {b,c} from S3,
/// T4 = {c,d} from S4, all injected at round t = 0. The conflict-free
/// pairs {T1,T4} and {T2,T3} take colors 0 and 1 and commit at t+6 and
/// t+10 respectively.
pub fn bds_walkthrough() -> (ScenarioReport, RunOutput) {
    let mut trace = InjectionTrace::default();
    trace.push(0, spec(1, 1, &[1, 2]));
    trace.push(0, spec(2, 3, &[1, 4]));
    trace.push(0, spec(3, 3, &[2, 3]));
    trace.push(0, spec(4, 4, &[3, 4]));
    let topology = Topology::uniform(4).unwrap();
    let scheduler = BdsScheduler::new(&topology, false).unwrap();
    let params = SimParams {
        topology,
        book: AccountBook::one_per_shard(4),
        rounds: 16,
        seed: 0,
        fail_prob: 0.0,
    };
    let out = run_simulation(params, &trace, Box::new(scheduler)).unwrap();
    let mut report = ScenarioReport {
        name: "bds-walkthrough",
        checks: Vec::new(),
    };
    let color = |id: u64| out.metrics.txns[&TxnId(id)].color;
    report.check_eq("color of T1", color(1), Some(0));
    report.check_eq("color of T2", color(2), Some(1));
    report.check_eq("color of T3", color(3), Some(1));
    report.check_eq("color of T4", color(4), Some(0));
    let commit = |id: u64| out.txns[&TxnId(id)].commit_round;
    report.check_eq("T1 commits at t+6", commit(1), Some(6));
    report.check_eq("T4 commits at t+6", commit(4), Some(6));
    report.check_eq("T2 commits at t+10", commit(2), Some(10));
    report.check_eq("T3 commits at t+10", commit(3), Some(10));
    report.check_eq(
        "epoch length 2 + 4*2",
        out.metrics.epochs.first().map(|e| e.length),
        Some(10),
    );
    // Conflicting pairs appear in color order in every shared ledger.
    let l1 = out.ledger(ShardId(1)).entries().to_vec();
    report.check_eq("S1 ledger order", l1, vec![(TxnId(1), 6), (TxnId(2), 10)]);
    let l3 = out.ledger(ShardId(3)).entries().to_vec();
    report.check_eq("S3 ledger order", l3, vec![(TxnId(4), 6), (TxnId(3), 10)]);
    (report, out)
}

/// Expected timing of one transaction in the clustered walkthrough.
#[derive(Debug, Clone, Copy)]
pub struct FdsExpectation {
    pub txn: TxnId,
    pub layer: u32,
    pub sublayer: u32,
    pub leader: ShardId,
    pub diameter: u64,
}

/// The clustered walkthrough on an 8-shard line (one account per shard).
///
/// Three transactions live in diameter-`d1` clusters of layer 2 and one
/// spans the whole line (layer 3, diameter `d2`): T1 = {a1,a2} from S2,
/// T2 = {a1,a7} from S5, T3 = {a4,a5} from S5, T4 = {a6,a7} from S7.
/// All are injected during the round before a common epoch boundary `t`;
/// the layer-2 transactions reach their destination queues at `t + 2*d1`
/// and commit at `t + 5*d1`, the layer-3 transaction at `t + 2*d2` and
/// `t + 5*d2`, with T2 queueing behind T1 and T4 at the shared
/// destinations.
pub fn fds_walkthrough() -> (ScenarioReport, RunOutput) {
    let s = 8;
    let topology = Topology::line(s).unwrap();
    let hierarchy = ClusterHierarchy::build(&topology).unwrap();
    let e0 = epoch_base(4, s);
    // Inject one round before the first common layer-2/layer-3 boundary.
    let t = 8 * e0; // lcm of the layer-2 (4*E0) and layer-3 (8*E0) epochs
    let mut trace = InjectionTrace::default();
    trace.push(t - 1, spec(1, 2, &[1, 2]));
    trace.push(t - 1, spec(2, 5, &[1, 7]));
    trace.push(t - 1, spec(3, 5, &[4, 5]));
    trace.push(t - 1, spec(4, 7, &[6, 7]));
    let expectations = [
        FdsExpectation {
            txn: TxnId(1),
            layer: 2,
            sublayer: 0,
            leader: ShardId(2),
            diameter: 3,
        },
        FdsExpectation {
            txn: TxnId(2),
            layer: 3,
            sublayer: 0,
            leader: ShardId(4),
            diameter: 7,
        },
        FdsExpectation {
            txn: TxnId(3),
            layer: 2,
            sublayer: 1,
            leader: ShardId(4),
            diameter: 3,
        },
        FdsExpectation {
            txn: TxnId(4),
            layer: 2,
            sublayer: 0,
            leader: ShardId(6),
            diameter: 3,
        },
    ];
    let scheduler = FdsScheduler::new(hierarchy.clone(), e0, false).unwrap();
    let params = SimParams {
        topology: Topology::line(s).unwrap(),
        book: AccountBook::one_per_shard(s),
        rounds: t + 40,
        seed: 0,
        fail_prob: 0.0,
    };
    let out = run_simulation(params, &trace, Box::new(scheduler)).unwrap();
    let mut report = ScenarioReport {
        name: "fds-walkthrough",
        checks: Vec::new(),
    };
    for exp in &expectations {
        let id = exp.txn;
        let cid = hierarchy.home_cluster_of(&out.txns[&id], &topology);
        let cluster = hierarchy.cluster(cid);
        report.check_eq(
            &format!("{id} home cluster level"),
            (cluster.layer, cluster.sublayer),
            (exp.layer, exp.sublayer),
        );
        report.check_eq(&format!("{id} cluster leader"), cluster.leader, Some(exp.leader));
        report.check_eq(
            &format!("{id} cluster diameter"),
            cluster.diameter as u64,
            exp.diameter,
        );
        let d = exp.diameter;
        let record = &out.metrics.txns[&id];
        report.check_eq(
            &format!("{id} queued at t+2d (d={d})"),
            record.queued_round,
            Some(t + 2 * d),
        );
        report.check_eq(
            &format!("{id} committed at t+5d (d={d})"),
            out.txns[&id].commit_round,
            Some(t + 5 * d),
        );
        let height = record.height.unwrap();
        report.check_eq(
            &format!("{id} height level"),
            (height.layer, height.sublayer),
            (exp.layer, exp.sublayer),
        );
    }
    // Shared destinations process the long transaction after the locals.
    let s1 = out.ledger(ShardId(1));
    report.check(
        "S1 serializes T1 before T2",
        s1.position_of(TxnId(1)) == Some(0) && s1.position_of(TxnId(2)) == Some(1),
        format!("{:?}", s1.entries()),
    );
    let s7 = out.ledger(ShardId(7));
    report.check(
        "S7 serializes T4 before T2",
        s7.position_of(TxnId(4)) == Some(0) && s7.position_of(TxnId(2)) == Some(1),
        format!("{:?}", s7.entries()),
    );
    (report, out)
}
