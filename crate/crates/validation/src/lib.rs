//! Holds the `acceptance` test target, kept in its own package so cargo runs
//! it after the unit, property and integration suites of the other crates.
