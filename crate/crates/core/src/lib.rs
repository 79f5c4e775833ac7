pub mod autodiff;
pub mod layers;
pub mod odeint;
pub mod models;
pub mod hydrodata;
pub mod training;
pub mod evalbench;
