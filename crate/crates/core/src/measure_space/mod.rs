//! Label grids, empirical measures, Wasserstein transport, and the
//! collection metric on `L²_λ(P₂(ℝᵈ))`.

mod collection;
mod empirical;
mod flow;
mod graphon;
mod grid;
pub mod io;
pub mod transport;

pub use collection::{
    collection_distance, collection_distance_with, sample_initial, standard_normal_quantile,
    MeasureCollection, MomentOrder, Moments,
};
pub(crate) use collection::draw_states;
pub use empirical::EmpiricalMeasure;
pub use flow::{marginal_sup_distance, path_distance, MeasureFlow};
pub use graphon::{graphon_neighborhood, Graphon, ZeroDegree};
pub use grid::LabelGrid;
pub use transport::{wasserstein2, wasserstein2_with, TransportMethod, TransportOptions, TransportValue};
