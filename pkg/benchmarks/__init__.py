# Comment needed for asv recognition
