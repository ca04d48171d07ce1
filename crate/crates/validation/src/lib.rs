//! Holds the acceptance gate for `logbranch`; run it with
//! `cargo test -p logbranch-validation --test acceptance`.
