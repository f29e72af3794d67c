fn main() {
    // Link the system OpenBLAS (provides both BLAS and LAPACK symbols for
    // ndarray-linalg). The Debian alternatives already route libblas/liblapack
    // to the same library; linking it directly keeps the choice explicit.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
