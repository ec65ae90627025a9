//! Placeholder bench harness; filled in once the avoiders land.

fn main() {}
