from hefed.cli import main

main()
