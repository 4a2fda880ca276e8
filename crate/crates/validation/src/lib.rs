//! Holds the `acceptance` test target: one PASS/FAIL line per reproduction
//! criterion. Run with `cargo test -p flowreg-validation --test acceptance`.
