mod linalg;
pub mod geometry;
pub mod lp;
pub mod ambiguity;
pub mod reformulation;
pub mod parallel;
pub mod dp;
pub mod newsvendor;
pub mod io;
