//! Home of the `acceptance` test target (`tests/acceptance.rs`), which runs every
//! criterion in `botdyn::experiments` and prints one pass/fail line per criterion.
//!
//! It lives in its own package so that it runs after every other test binary in
//! the workspace: a red criterion must not stop the rest of the suite from running.
