// SPDX-License-Identifier: Apache-2.0

//! Criterion benchmarks for the imaging stages live in `benches/`.
