//! Binary container for prepared samples.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::pipeline::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::{InputSpec, Sample};

const STORE_MAGIC: &str = "drivecast-samples-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStore {
    magic: String,
    pub dataset_name: String,
    pub max_steering_rad: f64,
    pub pipeline: PipelineConfig,
    pub samples: Vec<Sample>,
}

impl SampleStore {
    pub fn new(dataset_name: String, max_steering_rad: f64, pipeline: PipelineConfig, samples: Vec<Sample>) -> Self {
        SampleStore {
            magic: STORE_MAGIC.to_string(),
            dataset_name,
            max_steering_rad,
            pipeline,
            samples,
        }
    }

    pub fn input_spec(&self) -> InputSpec {
        self.pipeline.input_spec()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let out = File::create(path).map_err(|e| Error::io(path, e))?;
        bincode::serialize_into(BufWriter::new(out), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let input = File::open(path).map_err(|e| Error::io(path, e))?;
        let store: SampleStore = bincode::deserialize_from(BufReader::new(input))?;
        if store.magic != STORE_MAGIC {
            return Err(Error::Serialization(format!("{} is not a sample store", path.display())));
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::fixtures::{small_spec, well_formed};

    #[test]
    fn store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let store = SampleStore::new(
            "x".into(),
            1.0,
            PipelineConfig::default(),
            vec![well_formed(small_spec(), 1.0); 3],
        );
        store.save(&p).unwrap();
        assert_eq!(SampleStore::load(&p).unwrap(), store);
        std::fs::write(&p, b"junk").unwrap();
        assert!(SampleStore::load(&p).is_err());
    }
}
