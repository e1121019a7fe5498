pub mod analysis;
pub mod context;
pub mod gateway;
pub mod mapping;
pub mod model;
pub mod optimizer;
pub mod pipeline;
pub mod storyboard;
pub mod table;
