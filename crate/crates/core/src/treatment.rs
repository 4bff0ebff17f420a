use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a treatment regimen, e.g. `sema_2.0` or `dulaglutide 4.5 mg QW`.
///
/// Surrounding whitespace is trimmed; case is preserved.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Treatment(String);

impl Treatment {
    pub fn new(id: impl AsRef<str>) -> Self {
        Treatment(id.as_ref().trim().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Treatment {
    fn from(s: &str) -> Self {
        Treatment::new(s)
    }
}

impl From<String> for Treatment {
    fn from(s: String) -> Self {
        Treatment::new(s)
    }
}

impl Borrow<str> for Treatment {
    fn borrow(&self) -> &str {
        &self.0
    }
}
