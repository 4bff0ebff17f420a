pub mod bridge;
pub mod oracle;
