pub mod conllu;
pub mod eval;
pub mod model;
pub mod model_dir;
pub mod mwt;
pub mod numeric;
pub mod tags;
pub mod typology;
