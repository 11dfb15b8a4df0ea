//! Holds the `acceptance` test target; run it with `cargo test -p rfm-validation --test acceptance`.
