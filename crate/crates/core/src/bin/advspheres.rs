fn main() {
    advspheres::cli_main()
}
