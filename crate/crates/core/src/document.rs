//! Prover-side document store.
//!
//! Commands are defined once (id to text) and afterwards referenced only by
//! id. A document version maps each file node to its ordered list of
//! `(command id, exec id)` pairs. An update folds the edit operations over
//! the old command list and reuses execution ids on the longest common prefix.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::ids::{CommandId, ExecId, VersionId};
use crate::wire::NodeEdit;

/// Number of versions kept queryable; older ones are dropped.
pub const VERSION_HISTORY: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("command {0} is already defined")]
    DuplicateDefinition(CommandId),
    #[error("command id {0} is not a frontend id")]
    InvalidCommandId(CommandId),
    #[error("command {0} is not defined")]
    UndefinedCommand(CommandId),
    #[error("command {0} is not in the document")]
    DanglingReference(CommandId),
    #[error("command {0} occurs twice in one node")]
    DuplicateInNode(CommandId),
    #[error("nothing to delete after {0:?}")]
    DeleteAtEnd(Option<CommandId>),
    #[error("unknown version {0}")]
    UnknownVersion(VersionId),
    #[error("version {0} already exists")]
    DuplicateVersion(VersionId),
}

/// One step of the edit fold. On the wire this is a pair of optional ids:
/// `(after, Some(id))` inserts, `(after, None)` deletes the successor of
/// `after`, where `after = None` means the start of the node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EditOp {
    Insert {
        after: Option<CommandId>,
        id: CommandId,
    },
    Delete {
        after: Option<CommandId>,
    },
}

impl EditOp {
    pub fn as_pair(&self) -> (Option<CommandId>, Option<CommandId>) {
        match *self {
            EditOp::Insert { after, id } => (after, Some(id)),
            EditOp::Delete { after } => (after, None),
        }
    }

    pub fn from_pair(after: Option<CommandId>, what: Option<CommandId>) -> Self {
        match what {
            Some(id) => EditOp::Insert { after, id },
            None => EditOp::Delete { after },
        }
    }
}

/// Command id to execution ids, in document order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    pub entries: Vec<(CommandId, Vec<ExecId>)>,
}

impl Assignment {
    pub fn exec_of(&self, cmd: CommandId) -> Option<ExecId> {
        self.entries
            .iter()
            .find(|(c, _)| *c == cmd)
            .and_then(|(_, e)| e.first().copied())
    }
}

#[derive(Debug, Default)]
pub struct CommandTable {
    map: HashMap<CommandId, Arc<str>>,
}

impl CommandTable {
    pub fn define(&mut self, id: CommandId, text: &str) -> Result<(), DocumentError> {
        if id.0 >= 0 {
            return Err(DocumentError::InvalidCommandId(id));
        }
        if self.map.contains_key(&id) {
            return Err(DocumentError::DuplicateDefinition(id));
        }
        self.map.insert(id, Arc::from(text));
        Ok(())
    }

    pub fn lookup(&self, id: CommandId) -> Option<&Arc<str>> {
        self.map.get(&id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub type NodeCommands = Vec<(CommandId, ExecId)>;

/// Immutable snapshot of all file nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocumentVersion {
    pub id: VersionId,
    pub nodes: BTreeMap<String, Arc<NodeCommands>>,
}

impl DocumentVersion {
    pub fn empty(id: VersionId) -> Self {
        DocumentVersion {
            id,
            nodes: BTreeMap::new(),
        }
    }

    pub fn node(&self, name: &str) -> &[(CommandId, ExecId)] {
        self.nodes.get(name).map_or(&[], |n| n.as_slice())
    }

    pub fn commands(&self, name: &str) -> Vec<CommandId> {
        self.node(name).iter().map(|(c, _)| *c).collect()
    }

    pub fn assignment(&self) -> Assignment {
        Assignment {
            entries: self
                .nodes
                .values()
                .flat_map(|n| n.iter().map(|(c, e)| (*c, vec![*e])))
                .collect(),
        }
    }
}

/// Left fold of `ops` over `old`.
pub fn apply_edits(old: &[CommandId], ops: &[EditOp]) -> Result<Vec<CommandId>, DocumentError> {
    let mut cmds = old.to_vec();
    let position = |cmds: &[CommandId], id: CommandId| {
        cmds.iter()
            .position(|c| *c == id)
            .ok_or(DocumentError::DanglingReference(id))
    };
    for op in ops {
        match *op {
            EditOp::Insert { after, id } => {
                if cmds.contains(&id) {
                    return Err(DocumentError::DuplicateInNode(id));
                }
                let at = match after {
                    None => 0,
                    Some(p) => position(&cmds, p)? + 1,
                };
                cmds.insert(at, id);
            }
            EditOp::Delete { after } => {
                let at = match after {
                    None => 0,
                    Some(p) => position(&cmds, p)? + 1,
                };
                if at >= cmds.len() {
                    return Err(DocumentError::DeleteAtEnd(after));
                }
                cmds.remove(at);
            }
        }
    }
    Ok(cmds)
}

/// Execution ids for a new command list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeAssignment {
    pub entries: NodeCommands,
    /// Length of the longest common prefix with the old list.
    pub common_prefix: usize,
}

/// Reuses old execution ids on the longest common prefix (compared by command
/// id) and draws fresh ids for every position after it.
pub fn assign_execs(
    old: &[(CommandId, ExecId)],
    new_cmds: &[CommandId],
    mut fresh: impl FnMut() -> ExecId,
) -> NodeAssignment {
    let common_prefix = old
        .iter()
        .zip(new_cmds)
        .take_while(|((o, _), n)| o == *n)
        .count();
    let entries = new_cmds
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, if i < common_prefix { old[i].1 } else { fresh() }))
        .collect();
    NodeAssignment {
        entries,
        common_prefix,
    }
}

/// What the execution engine must do for one node after an update.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeChange {
    pub node: String,
    /// Last execution kept from the old version, `None` if nothing was kept.
    pub last_common: Option<ExecId>,
    /// New executions, in document order, with their command text.
    pub inserted: Vec<(ExecId, CommandId, Arc<str>)>,
}

#[derive(Clone, Debug)]
pub struct UpdateResult {
    pub version: Arc<DocumentVersion>,
    pub assignment: Assignment,
    pub changes: Vec<NodeChange>,
}

pub struct DocumentStore {
    commands: CommandTable,
    versions: VecDeque<Arc<DocumentVersion>>,
    next_exec: i64,
}

impl Default for DocumentStore {
    fn default() -> Self {
        Self::new()
    }
}

impl DocumentStore {
    pub fn new() -> Self {
        Self::with_first_exec_id(1)
    }

    /// A store whose first fresh execution id is `first`.
    pub fn with_first_exec_id(first: i64) -> Self {
        assert!(first > 0, "execution ids are positive");
        DocumentStore {
            commands: CommandTable::default(),
            versions: VecDeque::from([Arc::new(DocumentVersion::empty(VersionId::INITIAL))]),
            next_exec: first,
        }
    }

    pub fn define_command(&mut self, id: CommandId, text: &str) -> Result<(), DocumentError> {
        self.commands.define(id, text)
    }

    pub fn lookup(&self, id: CommandId) -> Option<&Arc<str>> {
        self.commands.lookup(id)
    }

    pub fn version(&self, id: VersionId) -> Option<Arc<DocumentVersion>> {
        self.versions.iter().find(|v| v.id == id).cloned()
    }

    pub fn latest(&self) -> Arc<DocumentVersion> {
        self.versions.back().cloned().expect("at least one version")
    }

    pub fn retained_versions(&self) -> usize {
        self.versions.len()
    }

    /// Folds `edits` over version `old`, registers version `new` and returns
    /// its assignment. Nothing is registered if any node edit fails.
    pub fn update(
        &mut self,
        old: VersionId,
        new: VersionId,
        edits: &[NodeEdit],
    ) -> Result<UpdateResult, DocumentError> {
        let base = self.version(old).ok_or(DocumentError::UnknownVersion(old))?;
        if self.version(new).is_some() {
            return Err(DocumentError::DuplicateVersion(new));
        }

        let mut edited: Vec<(&str, Vec<CommandId>)> = Vec::new();
        let mut seen = HashSet::new();
        for edit in edits {
            for op in &edit.ops {
                if let EditOp::Insert { id, .. } = op {
                    if self.commands.lookup(*id).is_none() {
                        return Err(DocumentError::UndefinedCommand(*id));
                    }
                }
            }
            // Repeated entries for one node continue from the previous result.
            let current = match edited.iter().position(|(n, _)| *n == edit.node) {
                Some(i) => edited.remove(i).1,
                None => base.commands(&edit.node),
            };
            seen.insert(edit.node.as_str());
            edited.push((edit.node.as_str(), apply_edits(&current, &edit.ops)?));
        }

        let mut nodes = base.nodes.clone();
        let mut changes = Vec::new();
        for (name, cmds) in edited {
            let na = assign_execs(base.node(name), &cmds, || {
                let e = ExecId(self.next_exec);
                self.next_exec += 1;
                e
            });
            let last_common = na
                .common_prefix
                .checked_sub(1)
                .map(|i| na.entries[i].1);
            let inserted: Vec<_> = na.entries[na.common_prefix..]
                .iter()
                .map(|(c, e)| (*e, *c, self.commands.lookup(*c).expect("checked").clone()))
                .collect();
            let old_len = base.node(name).len();
            if !inserted.is_empty() || old_len != na.common_prefix {
                changes.push(NodeChange {
                    node: name.to_string(),
                    last_common,
                    inserted,
                });
            }
            nodes.insert(name.to_string(), Arc::new(na.entries));
        }

        let version = Arc::new(DocumentVersion { id: new, nodes });
        self.versions.push_back(version.clone());
        while self.versions.len() > VERSION_HISTORY {
            self.versions.pop_front();
        }
        Ok(UpdateResult {
            assignment: version.assignment(),
            version,
            changes,
        })
    }
}
