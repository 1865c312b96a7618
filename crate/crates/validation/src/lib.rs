//! Holds the `acceptance` test target, which checks every published table,
//! the worked example and the numerical identities in one run. It lives in its
//! own package so the rest of the workspace's tests run before it.
//!
//! ```text
//! cargo test -p peclab-validation --test acceptance          # all criteria
//! cargo test -p peclab-validation --test acceptance -- 1 7   # a subset
//! ```
