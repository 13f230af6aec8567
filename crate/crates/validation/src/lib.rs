//! Holds the `acceptance` test target; run it with
//! `cargo test -p calpha-validation --test acceptance`.
