pub mod camera;
pub mod control;
pub mod dataset;
pub mod episode;
pub mod geom;
pub mod metrics;
pub mod observation;
pub mod sim;
pub mod track;
pub mod trajectory;
pub mod vehicle;
