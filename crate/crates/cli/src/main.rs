fn main() {
    std::process::exit(ctjmdp::main_with_args(std::env::args_os()));
}
