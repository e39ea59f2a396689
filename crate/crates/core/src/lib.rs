//! Surveillance analytics over Mexican COVID-19 case registries and
//! GISAID genomic metadata for the indigenous-language-speaking population.

pub mod epi_metrics;
pub mod fixtures;
pub mod genomics;
pub mod ingest;
pub mod percent;
pub mod report;
pub mod schema;
pub mod text;
