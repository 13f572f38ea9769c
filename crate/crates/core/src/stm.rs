//! State transaction machine.
//!
//! Commands are arranged in a DAG instead of a line. Each node takes its
//! input state from exactly one dependency:
//!
//! ```text
//! Definition a.      spine
//! Lemma t : ..       spine ──────────────┐
//!   Proof.           branch of t         │
//!   tactic.          branch of t         │
//!   Qed.             branch of t (close) │
//! Check t.           spine, depends on t ┘  (not on the proof body)
//! ```
//!
//! Nothing runs until a node is observed. Observing demands the node and its
//! dependency closure; a scheduler thread dispatches ready nodes to a worker
//! pool and emits their feedback through a [`FeedbackSink`]. A failure in a
//! proof branch fails the rest of that branch only; the spine keeps going, and
//! a failed spine node passes its input state on to its successor.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use crossbeam_channel::{select, Receiver, Sender};
use serde::Serialize;
use thiserror::Error;

use crate::ids::{CommandId, ExecId};
use crate::wire::Feedback;

/// How a command takes part in proof bracketing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CommandClass {
    /// Opens a proof branch (a lemma statement).
    Statement,
    /// Closes the open proof branch.
    Closing,
    Other,
}

/// Result of running one command: the output state, or `None` on failure.
pub struct Execution<S> {
    pub state: Option<S>,
    pub messages: Vec<Feedback>,
}

/// The prover behind the machine.
pub trait Executor: Send + Sync + 'static {
    type State: Send + Sync + 'static;

    fn classify(&self, text: &str) -> CommandClass;

    fn initial_state(&self) -> Self::State;

    /// State seen by the spine successor of a statement: the statement's
    /// declaration without its open proof.
    fn spine_state(&self, after_statement: &Self::State) -> Self::State;

    fn execute(&self, state: &Self::State, text: &str, exec_id: ExecId) -> Execution<Self::State>;

    /// Feedback for a node skipped because `upstream` failed.
    fn dependency_failed(&self, exec_id: ExecId, upstream: ExecId) -> Vec<Feedback> {
        vec![Feedback::error(
            exec_id,
            format!("Error: Not evaluated: depends on failed command (id {upstream})"),
        )]
    }
}

/// Destination of emitted feedback. Implementations assign serial numbers.
pub trait FeedbackSink: Send + Sync {
    fn emit(&self, feedback: Feedback);
}

/// Buffers feedback in emission order for [`FeedbackQueue::drain`].
#[derive(Default)]
pub struct FeedbackQueue {
    inner: Mutex<(u64, Vec<Feedback>)>,
}

impl FeedbackQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn drain(&self) -> Vec<Feedback> {
        std::mem::take(&mut self.inner.lock().expect("feedback queue").1)
    }
}

impl FeedbackSink for FeedbackQueue {
    fn emit(&self, mut feedback: Feedback) {
        let mut inner = self.inner.lock().expect("feedback queue");
        inner.0 += 1;
        feedback.serial = inner.0;
        inner.1.push(feedback);
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StmError {
    #[error("anchor {0} is not in the graph")]
    UnknownAnchor(ExecId),
    #[error("node {0} is not in the graph")]
    UnknownNode(ExecId),
    #[error("execution id {0} is already in the graph")]
    DuplicateNode(ExecId),
    #[error("scheduler stopped")]
    Stopped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Edge {
    Spine,
    Branch,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofBranch {
    pub opening: ExecId,
    pub body: Vec<ExecId>,
    pub closing: Option<ExecId>,
}

struct Node<S> {
    command_id: CommandId,
    text: Arc<str>,
    class: CommandClass,
    dep: Option<ExecId>,
    edge: Edge,
    /// Opening statement when the node is inside a proof branch.
    branch: Option<ExecId>,
    status: NodeStatus,
    demanded: bool,
    /// Output state when done; input state when failed on the spine.
    state: Option<Arc<S>>,
}

/// The command DAG, without any threads.
pub struct TransactionGraph<S> {
    nodes: HashMap<ExecId, Node<S>>,
    order: Vec<ExecId>,
}

impl<S> Default for TransactionGraph<S> {
    fn default() -> Self {
        TransactionGraph {
            nodes: HashMap::new(),
            order: Vec::new(),
        }
    }
}

impl<S> TransactionGraph<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, id: ExecId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// All nodes in document order.
    pub fn order(&self) -> &[ExecId] {
        &self.order
    }

    /// Top-level nodes in document order.
    pub fn spine(&self) -> Vec<ExecId> {
        self.order
            .iter()
            .copied()
            .filter(|id| self.nodes[id].branch.is_none())
            .collect()
    }

    pub fn dependency(&self, id: ExecId) -> Option<ExecId> {
        self.nodes.get(&id).and_then(|n| n.dep)
    }

    pub fn status(&self, id: ExecId) -> Option<NodeStatus> {
        self.nodes.get(&id).map(|n| n.status)
    }

    pub fn command_id(&self, id: ExecId) -> Option<CommandId> {
        self.nodes.get(&id).map(|n| n.command_id)
    }

    pub fn branches(&self) -> Vec<ProofBranch> {
        let mut out: Vec<ProofBranch> = Vec::new();
        for id in &self.order {
            let n = &self.nodes[id];
            if n.class == CommandClass::Statement && n.branch.is_none() {
                out.push(ProofBranch {
                    opening: *id,
                    body: Vec::new(),
                    closing: None,
                });
            }
            if let Some(open) = n.branch {
                let b = out
                    .iter_mut()
                    .rev()
                    .find(|b| b.opening == open)
                    .expect("branch opened before its body");
                if n.class == CommandClass::Closing {
                    b.closing = Some(*id);
                } else {
                    b.body.push(*id);
                }
            }
        }
        out
    }

    /// Keeps nodes up to and including `last_common`, drops the rest, appends
    /// `cmds` and recomputes the bracketing. Returns the dropped ids.
    pub fn insert_after(
        &mut self,
        last_common: Option<ExecId>,
        cmds: Vec<(ExecId, CommandId, Arc<str>, CommandClass)>,
    ) -> Result<Vec<ExecId>, StmError> {
        let keep = match last_common {
            None => 0,
            Some(a) => {
                self.order
                    .iter()
                    .position(|id| *id == a)
                    .ok_or(StmError::UnknownAnchor(a))?
                    + 1
            }
        };
        let mut fresh = HashSet::new();
        for (id, ..) in &cmds {
            let reused = self.order[..keep].contains(id);
            if reused || !id.is_valid() || !fresh.insert(*id) {
                return Err(StmError::DuplicateNode(*id));
            }
        }
        let dropped = self.order.split_off(keep);
        for id in &dropped {
            self.nodes.remove(id);
        }
        for (id, command_id, text, class) in cmds {
            self.order.push(id);
            self.nodes.insert(
                id,
                Node {
                    command_id,
                    text,
                    class,
                    dep: None,
                    edge: Edge::Spine,
                    branch: None,
                    status: NodeStatus::Pending,
                    demanded: false,
                    state: None,
                },
            );
        }
        self.rebracket();
        Ok(dropped)
    }

    fn rebracket(&mut self) {
        let mut spine_tip: Option<ExecId> = None;
        // (opening statement, last node of its branch)
        let mut open: Option<(ExecId, ExecId)> = None;
        for id in &self.order {
            let n = self.nodes.get_mut(id).expect("ordered node");
            match (n.class, open) {
                (CommandClass::Statement, _) => {
                    n.dep = spine_tip;
                    n.edge = Edge::Spine;
                    n.branch = None;
                    spine_tip = Some(*id);
                    open = Some((*id, *id));
                }
                (CommandClass::Closing, Some((stmt, last))) => {
                    n.dep = Some(last);
                    n.edge = Edge::Branch;
                    n.branch = Some(stmt);
                    open = None;
                }
                (_, Some((stmt, last))) => {
                    n.dep = Some(last);
                    n.edge = Edge::Branch;
                    n.branch = Some(stmt);
                    open = Some((stmt, *id));
                }
                (_, None) => {
                    n.dep = spine_tip;
                    n.edge = Edge::Spine;
                    n.branch = None;
                    spine_tip = Some(*id);
                }
            }
        }
    }

    /// `target` and everything it transitively depends on, target last.
    pub fn closure(&self, target: ExecId) -> Result<Vec<ExecId>, StmError> {
        if !self.contains(target) {
            return Err(StmError::UnknownNode(target));
        }
        let mut out = vec![target];
        let mut cur = target;
        while let Some(d) = self.nodes[&cur].dep {
            out.push(d);
            cur = d;
        }
        out.reverse();
        Ok(out)
    }

    /// Nodes nothing else depends on: the spine tip and the end of every
    /// proof branch. Their closures cover the whole graph.
    pub fn leaves(&self) -> Vec<ExecId> {
        let deps: HashSet<ExecId> = self.nodes.values().filter_map(|n| n.dep).collect();
        self.order
            .iter()
            .copied()
            .filter(|id| !deps.contains(id))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExecRecord {
    pub exec_id: ExecId,
    pub command_id: CommandId,
    pub worker: usize,
    /// Microseconds since the machine started.
    pub start_us: u64,
    pub end_us: u64,
    /// The node was dropped from the graph while it ran.
    pub discarded: bool,
}

#[derive(Clone, Debug)]
pub struct StmConfig {
    pub workers: usize,
}

impl Default for StmConfig {
    fn default() -> Self {
        StmConfig {
            workers: thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl StmConfig {
    pub fn with_workers(workers: usize) -> Self {
        StmConfig {
            workers: workers.max(1),
        }
    }

    /// One worker, so completion order and serials are reproducible.
    pub fn deterministic() -> Self {
        Self::with_workers(1)
    }
}

/// Read-only view of the graph at one moment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphView {
    pub order: Vec<ExecId>,
    pub spine: Vec<ExecId>,
    pub dependencies: HashMap<ExecId, Option<ExecId>>,
    pub status: HashMap<ExecId, NodeStatus>,
    pub branches: Vec<ProofBranch>,
}

type InsertCmds = Vec<(ExecId, CommandId, Arc<str>)>;

enum Cmd {
    Insert(Option<ExecId>, InsertCmds, Sender<Result<(), StmError>>),
    Observe(ExecId, Sender<Result<(), StmError>>),
    ObserveAll(Sender<()>),
    View(Sender<GraphView>),
    WaitQuiescent(Sender<()>),
}

struct Job<S> {
    exec_id: ExecId,
    text: Arc<str>,
    state: Arc<S>,
}

struct Finished<S> {
    exec_id: ExecId,
    command_id: CommandId,
    result: Execution<S>,
    worker: usize,
    start: Instant,
    end: Instant,
}

/// A running machine: one scheduler thread plus a worker pool.
pub struct Stm<E: Executor> {
    cmd_tx: Option<Sender<Cmd>>,
    scheduler: Option<JoinHandle<()>>,
    executor: Arc<E>,
    log: Arc<Mutex<Vec<ExecRecord>>>,
}

impl<E: Executor> Stm<E> {
    pub fn new(executor: Arc<E>, config: StmConfig, sink: Arc<dyn FeedbackSink>) -> Self {
        let (cmd_tx, cmd_rx) = crossbeam_channel::unbounded();
        let log = Arc::new(Mutex::new(Vec::new()));
        let scheduler = Scheduler {
            executor: executor.clone(),
            graph: TransactionGraph::new(),
            sink,
            workers: config.workers.max(1),
            in_flight: 0,
            waiters: Vec::new(),
            log: log.clone(),
            epoch: Instant::now(),
        };
        let handle = thread::Builder::new()
            .name("stm-scheduler".into())
            .spawn(move || scheduler.run(cmd_rx))
            .expect("spawn scheduler");
        Stm {
            cmd_tx: Some(cmd_tx),
            scheduler: Some(handle),
            executor,
            log,
        }
    }

    fn request<T>(&self, make: impl FnOnce(Sender<T>) -> Cmd) -> Result<T, StmError> {
        let (tx, rx) = crossbeam_channel::bounded(1);
        self.cmd_tx
            .as_ref()
            .ok_or(StmError::Stopped)?
            .send(make(tx))
            .map_err(|_| StmError::Stopped)?;
        rx.recv().map_err(|_| StmError::Stopped)
    }

    /// Replaces everything after `last_common` with `cmds`. Starts no work.
    pub fn insert_after(
        &self,
        last_common: Option<ExecId>,
        cmds: Vec<(ExecId, CommandId, Arc<str>)>,
    ) -> Result<(), StmError> {
        self.request(|tx| Cmd::Insert(last_common, cmds, tx))?
    }

    /// Demands `target` and its dependencies; returns once scheduled.
    pub fn observe(&self, target: ExecId) -> Result<(), StmError> {
        self.request(|tx| Cmd::Observe(target, tx))?
    }

    /// Observes every leaf, i.e. the whole document.
    pub fn observe_all(&self) -> Result<(), StmError> {
        self.request(Cmd::ObserveAll)
    }

    /// Blocks until no demanded node is pending or running.
    pub fn wait_quiescent(&self) -> Result<(), StmError> {
        self.request(Cmd::WaitQuiescent)
    }

    pub fn view(&self) -> Result<GraphView, StmError> {
        self.request(Cmd::View)
    }

    pub fn execution_log(&self) -> Vec<ExecRecord> {
        self.log.lock().expect("log").clone()
    }

    pub fn executor(&self) -> &Arc<E> {
        &self.executor
    }
}

impl<E: Executor> Drop for Stm<E> {
    fn drop(&mut self) {
        self.cmd_tx.take();
        if let Some(h) = self.scheduler.take() {
            let _ = h.join();
        }
    }
}

struct Scheduler<E: Executor> {
    executor: Arc<E>,
    graph: TransactionGraph<E::State>,
    sink: Arc<dyn FeedbackSink>,
    workers: usize,
    /// Jobs sent and not yet finished, including discarded ones.
    in_flight: usize,
    waiters: Vec<Sender<()>>,
    log: Arc<Mutex<Vec<ExecRecord>>>,
    epoch: Instant,
}

impl<E: Executor> Scheduler<E> {
    fn run(mut self, cmd_rx: Receiver<Cmd>) {
        let (job_tx, job_rx) = crossbeam_channel::unbounded::<(Job<E::State>, CommandId)>();
        let (done_tx, done_rx) = crossbeam_channel::unbounded::<Finished<E::State>>();
        let pool: Vec<JoinHandle<()>> = (0..self.workers)
            .map(|w| {
                let job_rx = job_rx.clone();
                let done_tx = done_tx.clone();
                let executor = self.executor.clone();
                thread::Builder::new()
                    .name(format!("stm-worker-{w}"))
                    .spawn(move || {
                        for (job, command_id) in job_rx {
                            let start = Instant::now();
                            let result = executor.execute(&job.state, &job.text, job.exec_id);
                            let end = Instant::now();
                            let finished = Finished {
                                exec_id: job.exec_id,
                                command_id,
                                result,
                                worker: w,
                                start,
                                end,
                            };
                            if done_tx.send(finished).is_err() {
                                break;
                            }
                        }
                    })
                    .expect("spawn worker")
            })
            .collect();
        drop(done_tx);

        loop {
            select! {
                recv(cmd_rx) -> cmd => match cmd {
                    Ok(cmd) => self.handle(cmd),
                    Err(_) => break,
                },
                recv(done_rx) -> done => {
                    if let Ok(done) = done {
                        self.complete(done);
                    }
                }
            }
            self.dispatch(&job_tx);
            self.notify_quiescent();
        }

        drop(job_tx);
        for h in pool {
            let _ = h.join();
        }
    }

    fn handle(&mut self, cmd: Cmd) {
        match cmd {
            Cmd::Insert(last_common, cmds, reply) => {
                let cmds = cmds
                    .into_iter()
                    .map(|(e, c, t)| {
                        let class = self.executor.classify(&t);
                        (e, c, t, class)
                    })
                    .collect();
                let res = self.graph.insert_after(last_common, cmds).map(|dropped| {
                    if !dropped.is_empty() {
                        log::debug!("discarded {} nodes", dropped.len());
                    }
                });
                let _ = reply.send(res);
            }
            Cmd::Observe(target, reply) => {
                let res = self.graph.closure(target).map(|ids| self.demand(&ids));
                let _ = reply.send(res);
            }
            Cmd::ObserveAll(reply) => {
                for leaf in self.graph.leaves() {
                    let ids = self.graph.closure(leaf).expect("leaf in graph");
                    self.demand(&ids);
                }
                let _ = reply.send(());
            }
            Cmd::View(reply) => {
                let g = &self.graph;
                let _ = reply.send(GraphView {
                    order: g.order.clone(),
                    spine: g.spine(),
                    dependencies: g.order.iter().map(|id| (*id, g.dependency(*id))).collect(),
                    status: g.order.iter().map(|id| (*id, g.nodes[id].status)).collect(),
                    branches: g.branches(),
                });
            }
            Cmd::WaitQuiescent(reply) => self.waiters.push(reply),
        }
    }

    fn demand(&mut self, ids: &[ExecId]) {
        for id in ids {
            self.graph.nodes.get_mut(id).expect("closure member").demanded = true;
        }
    }

    fn complete(&mut self, done: Finished<E::State>) {
        self.in_flight -= 1;
        let discarded = !self.graph.contains(done.exec_id)
            || self.graph.nodes[&done.exec_id].status != NodeStatus::Running;
        self.log.lock().expect("log").push(ExecRecord {
            exec_id: done.exec_id,
            command_id: done.command_id,
            worker: done.worker,
            start_us: done.start.duration_since(self.epoch).as_micros() as u64,
            end_us: done.end.duration_since(self.epoch).as_micros() as u64,
            discarded,
        });
        if discarded {
            return;
        }
        let Execution { state, messages } = done.result;
        let node = self.graph.nodes.get_mut(&done.exec_id).expect("live node");
        match state {
            Some(s) => {
                node.status = NodeStatus::Done;
                node.state = Some(Arc::new(s));
            }
            None => {
                // Spine successors continue from the failed node's input.
                node.status = NodeStatus::Failed;
                let input = self.input_state(done.exec_id);
                self.graph.nodes.get_mut(&done.exec_id).expect("live node").state = input;
            }
        }
        for m in messages {
            self.sink.emit(m);
        }
    }

    /// Input state for `id` if its dependency has resolved; `Err(upstream)`
    /// when a failed dependency blocks it.
    fn resolve(&self, id: ExecId) -> Option<Result<Arc<E::State>, ExecId>> {
        let node = &self.graph.nodes[&id];
        let Some(dep_id) = node.dep else {
            return Some(Ok(Arc::new(self.executor.initial_state())));
        };
        let dep = &self.graph.nodes[&dep_id];
        let state = dep.state.as_ref();
        match (dep.status, node.edge) {
            (NodeStatus::Done, Edge::Spine) if dep.class == CommandClass::Statement => Some(Ok(
                Arc::new(self.executor.spine_state(state.expect("done node has state"))),
            )),
            (NodeStatus::Done, _) => Some(Ok(state.expect("done node has state").clone())),
            (NodeStatus::Failed, Edge::Branch) => Some(Err(dep_id)),
            (NodeStatus::Failed, Edge::Spine) => match state {
                Some(s) => Some(Ok(s.clone())),
                None => Some(Err(dep_id)),
            },
            _ => None,
        }
    }

    fn input_state(&self, id: ExecId) -> Option<Arc<E::State>> {
        match self.resolve(id) {
            Some(Ok(s)) => Some(s),
            _ => None,
        }
    }

    fn dispatch(&mut self, job_tx: &Sender<(Job<E::State>, CommandId)>) {
        loop {
            let mut progressed = false;
            for i in 0..self.graph.order.len() {
                if self.in_flight >= self.workers {
                    return;
                }
                let id = self.graph.order[i];
                let node = &self.graph.nodes[&id];
                if !node.demanded || node.status != NodeStatus::Pending {
                    continue;
                }
                match self.resolve(id) {
                    None => {}
                    Some(Ok(state)) => {
                        let node = self.graph.nodes.get_mut(&id).expect("node");
                        node.status = NodeStatus::Running;
                        let job = Job {
                            exec_id: id,
                            text: node.text.clone(),
                            state,
                        };
                        self.in_flight += 1;
                        job_tx.send((job, node.command_id)).expect("workers alive");
                    }
                    Some(Err(upstream)) => {
                        self.graph.nodes.get_mut(&id).expect("node").status = NodeStatus::Failed;
                        for m in self.executor.dependency_failed(id, upstream) {
                            self.sink.emit(m);
                        }
                        progressed = true;
                    }
                }
            }
            if !progressed {
                return;
            }
        }
    }

    fn notify_quiescent(&mut self) {
        if self.waiters.is_empty() || self.in_flight > 0 {
            return;
        }
        let busy = self
            .graph
            .nodes
            .values()
            .any(|n| n.demanded && matches!(n.status, NodeStatus::Pending | NodeStatus::Running));
        if !busy {
            for w in self.waiters.drain(..) {
                let _ = w.send(());
            }
        }
    }
}

/// Monotone counter for feedback serials, shared by every emitter of one
/// prover session.
#[derive(Debug, Default)]
pub struct SerialCounter(AtomicU64);

impl SerialCounter {
    pub fn next(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst) + 1
    }
}
