use std::process::ExitCode;

#[global_allocator]
static ALLOC: dstl::memtrack::TrackingAllocator = dstl::memtrack::TrackingAllocator;

fn main() -> ExitCode {
    ExitCode::from(dstl::cli::run(std::env::args_os()))
}
