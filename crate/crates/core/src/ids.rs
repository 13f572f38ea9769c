//! Identifier newtypes shared by both sides of the protocol.
//!
//! Sign convention: identifiers minted by the editor (command and version ids)
//! are negative, identifiers minted by the prover (execution ids) are positive.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub i64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<i64> for $name {
            fn from(v: i64) -> Self {
                $name(v)
            }
        }
    };
}

id_type!(
    /// Names an immutable command text. Negative once assigned; `0` means unassigned.
    CommandId
);
id_type!(
    /// Names one scheduled computation of a command. Always positive.
    ExecId
);
id_type!(
    /// Opaque document version id supplied by the editor.
    VersionId
);

impl CommandId {
    pub const UNASSIGNED: CommandId = CommandId(0);

    pub fn is_assigned(self) -> bool {
        self.0 != 0
    }
}

impl ExecId {
    pub fn is_valid(self) -> bool {
        self.0 > 0
    }
}

impl VersionId {
    /// The empty version every document starts from.
    pub const INITIAL: VersionId = VersionId(0);
}
